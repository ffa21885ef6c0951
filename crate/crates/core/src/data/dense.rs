//! Dense `N × D` datasets.
//!
//! Binary layout (little-endian): the 8-byte magic `TRSVIDNS`, a one-byte
//! dtype (`0` = f64, `1` = u8 binary), three reserved zero bytes, `N` and
//! `D` as u64, then the row-major payload.

use super::bow::hex;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"TRSVIDNS";

#[derive(Debug, Clone, PartialEq)]
pub struct DenseDataset {
    n: usize,
    d: usize,
    values: Vec<f64>,
    binary: bool,
    /// Seed used by [`binarize`], if the data came from it.
    pub binarize_seed: Option<u64>,
}

impl DenseDataset {
    pub fn new(n: usize, d: usize, values: Vec<f64>, binary: bool) -> Result<Self> {
        if values.len() != n * d {
            return Err(Error::Validation(format!(
                "{n} x {d} dataset needs {} values, got {}",
                n * d,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite value in row {}", i / d.max(1) + 1)));
        }
        if binary {
            if let Some(i) = values.iter().position(|v| *v != 0.0 && *v != 1.0) {
                return Err(Error::Validation(format!(
                    "binary dataset has value {} in row {}",
                    values[i],
                    i / d + 1
                )));
            }
        }
        Ok(Self { n, d, values, binary, binarize_seed: None })
    }

    pub fn from_rows(rows: &[Vec<f64>], binary: bool) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.len());
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Validation(format!(
                "row {} has {} columns, expected {d}",
                i + 1,
                rows[i].len()
            )));
        }
        Self::new(rows.len(), d, rows.concat(), binary)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks_exact(self.d.max(1)).take(self.n).map(<[f64]>::to_vec).collect()
    }

    /// Rows `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> DenseDataset {
        DenseDataset {
            n: range.len(),
            d: self.d,
            values: self.values[range.start * self.d..range.end * self.d].to_vec(),
            binary: self.binary,
            binarize_seed: self.binarize_seed,
        }
    }

    /// SHA-256 over the binary serialization.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        self.write_binary(&mut buf).expect("writing to memory");
        hex(&Sha256::digest(&buf))
    }

    pub fn write_binary<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&[u8::from(self.binary), 0, 0, 0])?;
        out.write_all(&(self.n as u64).to_le_bytes())?;
        out.write_all(&(self.d as u64).to_le_bytes())?;
        if self.binary {
            let bytes: Vec<u8> = self.values.iter().map(|&v| v as u8).collect();
            out.write_all(&bytes)?;
        } else {
            for v in &self.values {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(input: &mut R) -> Result<Self> {
        let mut head = [0u8; 28];
        input.read_exact(&mut head).map_err(|_| Error::Validation("truncated dataset header".into()))?;
        if &head[..8] != MAGIC {
            return Err(Error::Validation("not a dense dataset (bad magic)".into()));
        }
        let binary = match head[8] {
            0 => false,
            1 => true,
            t => return Err(Error::Validation(format!("unknown dtype {t}"))),
        };
        let n = u64::from_le_bytes(head[12..20].try_into().expect("8 bytes")) as usize;
        let d = u64::from_le_bytes(head[20..28].try_into().expect("8 bytes")) as usize;
        let count = n.checked_mul(d).ok_or_else(|| Error::Validation("dataset too large".into()))?;
        let width = if binary { 1 } else { 8 };
        let mut payload = Vec::new();
        input.read_to_end(&mut payload)?;
        if payload.len() != count * width {
            return Err(Error::Validation(format!(
                "payload holds {} bytes, header implies {}",
                payload.len(),
                count * width
            )));
        }
        let values = if binary {
            payload.iter().map(|&b| f64::from(b)).collect()
        } else {
            payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()
        };
        Self::new(n, d, values, binary)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut input = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_binary(&mut input)
    }

    /// Comma-separated rows without a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for row in self.values.chunks_exact(self.d.max(1)).take(self.n) {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads comma-separated rows; the dataset is binary when `binary` is set.
    pub fn read_csv<R: Read>(input: R, binary: bool) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
            let row = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::Parse { line: i + 1, msg: format!("`{f}` is not a number") })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows, binary)
    }

    /// Binary layout for `.bin`/`.dense` paths, CSV otherwise.
    pub fn load_any(path: &Path, binary_csv: bool) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Self::read_csv(std::fs::File::open(path)?, binary_csv),
            _ => Self::load(path),
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Per-record random stream: the same record always sees the same draws,
/// independent of how records are scheduled.
pub(crate) fn record_rng(seed: u64, record: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(record + 1);
    rng
}

/// Sets every entry to 1 with probability equal to its grayscale value.
pub fn binarize(gray: &DenseDataset, seed: u64) -> Result<DenseDataset> {
    if let Some(i) = gray.values.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Validation(format!(
            "grayscale value {} in row {} is outside [0, 1]",
            gray.values[i],
            i / gray.d.max(1) + 1
        )));
    }
    let mut values = Vec::with_capacity(gray.values.len());
    for i in 0..gray.n {
        let mut rng = record_rng(seed, i as u64);
        values.extend(gray.row(i).iter().map(|&p| if rng.random::<f64>() < p { 1.0 } else { 0.0 }));
    }
    let mut out = DenseDataset::new(gray.n, gray.d, values, true)?;
    out.binarize_seed = Some(seed);
    Ok(out)
}
