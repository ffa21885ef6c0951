//! Sparse bag-of-words corpora.
//!
//! Text layout: a header line `N V NNZ`, then one `doc word count` triple
//! per line with 1-based ids. Blank lines and lines starting with `#` are
//! ignored.

use crate::error::{Error, Result};
use crate::models::Document;
use sha2::{Digest, Sha256};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub docs: Vec<Document>,
    pub vocab: usize,
    /// Optional per-document labels, e.g. a generator's dominant topic.
    pub labels: Option<Vec<usize>>,
}

impl Corpus {
    pub fn new(docs: Vec<Document>, vocab: usize) -> Result<Self> {
        let c = Self { docs, vocab, labels: None };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (n, d) in self.docs.iter().enumerate() {
            if let Some(&w) = d.ids().last() {
                if w >= self.vocab {
                    return Err(Error::Validation(format!(
                        "document {} uses word {} but the vocabulary has {} words",
                        n + 1,
                        w + 1,
                        self.vocab
                    )));
                }
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.docs.len() {
                return Err(Error::Validation("label count differs from document count".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.docs.iter().map(|d| d.unique_words()).sum()
    }

    pub fn total_words(&self) -> f64 {
        self.docs.iter().map(|d| d.len()).sum()
    }

    /// SHA-256 over the canonical text serialization.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        write_bow(&mut buf, self).expect("writing to memory");
        hex(&Sha256::digest(&buf))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_field(tok: Option<&str>, line: usize, what: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::Parse { line, msg: format!("missing {what}") })?;
    tok.parse()
        .map_err(|_| Error::Parse { line, msg: format!("{what} `{tok}` is not a non-negative integer") })
}

pub fn parse_bow<R: BufRead>(input: R) -> Result<Corpus> {
    let mut header: Option<(usize, usize, usize)> = None;
    let mut pairs: Vec<Vec<(usize, u32)>> = Vec::new();
    let mut found = 0usize;
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let mut toks = body.split_whitespace();
        let a = parse_field(toks.next(), lineno, "first field")?;
        let b = parse_field(toks.next(), lineno, "second field")?;
        let c = parse_field(toks.next(), lineno, "third field")?;
        if toks.next().is_some() {
            return Err(Error::Parse { line: lineno, msg: "expected exactly three fields".into() });
        }
        let Some((n, v, _)) = header else {
            header = Some((a, b, c));
            pairs = vec![Vec::new(); a];
            continue;
        };
        if a == 0 || a > n {
            return Err(Error::Validation(format!("line {lineno}: document id {a} outside 1..={n}")));
        }
        if b == 0 || b > v {
            return Err(Error::Validation(format!("line {lineno}: word id {b} outside 1..={v}")));
        }
        if c == 0 {
            return Err(Error::Validation(format!("line {lineno}: count must be at least 1")));
        }
        let count =
            u32::try_from(c).map_err(|_| Error::Validation(format!("line {lineno}: count {c} too large")))?;
        pairs[a - 1].push((b - 1, count));
        found += 1;
    }
    let (_, v, nnz) = header.ok_or(Error::Parse { line: 1, msg: "missing header `N V NNZ`".into() })?;
    if found != nnz {
        return Err(Error::Validation(format!("header declares {nnz} entries, found {found}")));
    }
    let docs = pairs.into_iter().map(Document::from_counts).collect::<Result<_>>()?;
    Corpus::new(docs, v)
}

pub fn load_bow(path: &Path) -> Result<Corpus> {
    parse_bow(BufReader::new(std::fs::File::open(path)?))
}

pub fn write_bow<W: Write>(out: &mut W, corpus: &Corpus) -> Result<()> {
    writeln!(out, "{} {} {}", corpus.len(), corpus.vocab, corpus.nnz())?;
    for (n, d) in corpus.docs.iter().enumerate() {
        for (w, c) in d.pairs() {
            writeln!(out, "{} {} {}", n + 1, w + 1, c as u64)?;
        }
    }
    Ok(())
}

pub fn save_bow(path: &Path, corpus: &Corpus) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_bow(&mut out, corpus)?;
    out.flush()?;
    Ok(())
}
