//! Append-only observation store and its event log.

use crate::error::{Error, Result};
use crate::models::Document;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::sync::{Arc, RwLock, RwLockReadGuard};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    NewRecord,
    WordReveal,
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEvent {
    pub tick: u64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_id: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_id: Option<usize>,
    /// Contents of a new dense record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Vec<f64>>,
}

impl StreamEvent {
    pub fn new_record(tick: u64, record_id: usize, payload: Option<Vec<f64>>) -> Self {
        Self { tick, kind: EventKind::NewRecord, record_id: Some(record_id), word_id: None, payload }
    }

    pub fn word_reveal(tick: u64, record_id: usize, word_id: usize) -> Self {
        Self {
            tick,
            kind: EventKind::WordReveal,
            record_id: Some(record_id),
            word_id: Some(word_id),
            payload: None,
        }
    }
}

pub fn write_events<W: Write>(out: &mut W, events: &[StreamEvent]) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut *out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_events<R: BufRead>(input: R) -> Result<Vec<StreamEvent>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || crate::inference::is_header(&line) {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?);
    }
    Ok(out)
}

/// What a database record can be built from and grown by.
pub trait StreamRecord: Clone + Send + Sync {
    fn from_payload(payload: Option<&[f64]>) -> Result<Self>;
    fn reveal(&mut self, word: usize) -> Result<()>;
}

impl StreamRecord for Document {
    fn from_payload(payload: Option<&[f64]>) -> Result<Self> {
        match payload {
            None => Ok(Document::default()),
            Some(_) => Err(Error::usage("documents start empty; reveal words instead")),
        }
    }

    fn reveal(&mut self, word: usize) -> Result<()> {
        self.add_tokens(word, 1);
        Ok(())
    }
}

impl StreamRecord for Vec<f64> {
    fn from_payload(payload: Option<&[f64]>) -> Result<Self> {
        payload.map(<[f64]>::to_vec).ok_or_else(|| Error::usage("dense records need a payload"))
    }

    fn reveal(&mut self, _word: usize) -> Result<()> {
        Err(Error::usage("dense records cannot reveal words"))
    }
}

/// What increments `N_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingUnit {
    #[default]
    Records,
    Words,
}

/// Append-only record store. Records only ever grow; `N_t` never
/// decreases.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationDb<X> {
    records: Vec<X>,
    n_t: f64,
    unit: CountingUnit,
    log: Vec<StreamEvent>,
}

impl<X: StreamRecord> ObservationDb<X> {
    pub fn new(unit: CountingUnit) -> Self {
        Self { records: Vec::new(), n_t: 0.0, unit, log: Vec::new() }
    }

    pub fn ingest(&mut self, event: &StreamEvent) -> Result<()> {
        match event.kind {
            EventKind::NewRecord => {
                if let Some(id) = event.record_id {
                    if id != self.records.len() {
                        return Err(Error::usage(format!(
                            "new record id {id} out of sequence, expected {}",
                            self.records.len()
                        )));
                    }
                }
                self.records.push(X::from_payload(event.payload.as_deref())?);
                if self.unit == CountingUnit::Records {
                    self.n_t += 1.0;
                }
            }
            EventKind::WordReveal => {
                let id = event.record_id.ok_or_else(|| Error::usage("word reveal without record id"))?;
                let word = event.word_id.ok_or_else(|| Error::usage("word reveal without word id"))?;
                let record = self
                    .records
                    .get_mut(id)
                    .ok_or_else(|| Error::usage(format!("word reveal for unknown record {id}")))?;
                record.reveal(word)?;
                if self.unit == CountingUnit::Words {
                    self.n_t += 1.0;
                }
            }
        }
        self.log.push(event.clone());
        Ok(())
    }

    pub fn records(&self) -> &[X] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_t(&self) -> f64 {
        self.n_t
    }

    pub fn unit(&self) -> CountingUnit {
        self.unit
    }

    /// Every event ingested so far, in order.
    pub fn events(&self) -> &[StreamEvent] {
        &self.log
    }

    /// Rebuilds a database from a logged event sequence.
    pub fn replay(unit: CountingUnit, events: &[StreamEvent]) -> Result<Self> {
        let mut db = Self::new(unit);
        for e in events {
            db.ingest(e)?;
        }
        Ok(db)
    }
}

/// A database shared between one ingesting thread and one optimizer. A
/// record append or word reveal happens entirely under the write lock, so
/// readers never see a partial update.
#[derive(Debug, Clone)]
pub struct SharedDb<X>(Arc<RwLock<ObservationDb<X>>>);

impl<X: StreamRecord> SharedDb<X> {
    pub fn new(db: ObservationDb<X>) -> Self {
        Self(Arc::new(RwLock::new(db)))
    }

    pub fn ingest(&self, event: &StreamEvent) -> Result<()> {
        self.0.write().expect("database lock poisoned").ingest(event)
    }

    pub fn read(&self) -> RwLockReadGuard<'_, ObservationDb<X>> {
        self.0.read().expect("database lock poisoned")
    }
}
