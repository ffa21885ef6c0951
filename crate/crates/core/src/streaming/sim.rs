//! Simulated arrival streams.

use super::db::StreamEvent;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamSimConfig {
    /// Poisson rate of new documents per tick.
    pub rate: f64,
    /// Probability that an active document reveals its next word in a tick.
    pub reveal_prob: f64,
    /// Ticks a document waits after a reveal before it can reveal again.
    #[serde(default)]
    pub delay: u64,
    pub ticks: u64,
    /// Documents activated at tick 0 in addition to the Poisson arrivals.
    #[serde(default)]
    pub initial: usize,
    pub seed: u64,
}

impl StreamSimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0) || !self.rate.is_finite() {
            return Err(Error::usage("arrival rate must be positive"));
        }
        if !(self.reveal_prob > 0.0 && self.reveal_prob <= 1.0) {
            return Err(Error::usage("reveal probability must lie in (0, 1]"));
        }
        Ok(())
    }
}

struct Active {
    record: usize,
    source: usize,
    next: usize,
    ready_at: u64,
}

/// Word-level stream over `docs` (token sequences, revealed in order).
/// Every tick activates `Poisson(rate)` unseen documents, then each active
/// document reveals its next word with probability `reveal_prob`; a
/// document leaves the active set once all its words are revealed.
/// Documents are taken in corpus order.
pub fn simulate_stream(cfg: &StreamSimConfig, docs: &[Vec<usize>]) -> Result<Vec<StreamEvent>> {
    cfg.validate()?;
    if docs.is_empty() {
        return Err(Error::usage("cannot stream an empty corpus"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let arrivals = Poisson::new(cfg.rate).expect("validated rate");
    let mut events = Vec::new();
    let mut active: Vec<Active> = Vec::new();
    let mut next_doc = 0usize;
    for tick in 0..cfg.ticks {
        let mut count: usize = arrivals.sample(&mut rng) as usize;
        if tick == 0 {
            count += cfg.initial;
        }
        for _ in 0..count {
            if next_doc == docs.len() {
                break;
            }
            let record = next_doc;
            events.push(StreamEvent::new_record(tick, record, None));
            active.push(Active { record, source: next_doc, next: 0, ready_at: tick });
            next_doc += 1;
        }
        for a in &mut active {
            if a.ready_at > tick || !(rng.random::<f64>() < cfg.reveal_prob) {
                continue;
            }
            let tokens = &docs[a.source];
            if let Some(&w) = tokens.get(a.next) {
                events.push(StreamEvent::word_reveal(tick, a.record, w));
                a.next += 1;
                a.ready_at = tick + 1 + cfg.delay;
            }
        }
        active.retain(|a| a.next < docs[a.source].len());
        if next_doc == docs.len() && active.is_empty() {
            break;
        }
    }
    Ok(events)
}

/// Stream of whole dense records: `Poisson(rate)` arrivals per tick, each
/// carrying its row as payload. Rows are taken in order.
pub fn simulate_arrivals(
    rate: f64,
    ticks: u64,
    initial: usize,
    rows: &[Vec<f64>],
    seed: u64,
) -> Result<Vec<StreamEvent>> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::usage("arrival rate must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arrivals = Poisson::new(rate).expect("validated rate");
    let mut events = Vec::new();
    let mut next = 0usize;
    for tick in 0..ticks {
        let mut count = arrivals.sample(&mut rng) as usize;
        if tick == 0 {
            count += initial;
        }
        for _ in 0..count {
            if next == rows.len() {
                return Ok(events);
            }
            events.push(StreamEvent::new_record(tick, next, Some(rows[next].clone())));
            next += 1;
        }
    }
    Ok(events)
}
