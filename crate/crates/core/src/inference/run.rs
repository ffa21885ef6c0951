//! Training loop, metric records and checkpoints.

use super::eb::{update_prior, EbReport};
use super::schedule::{learning_rate, Schedule};
use super::step::{svi_step, Method};
use crate::error::{Error, Result};
use crate::models::{elbo_estimate, full_elbo, Batch, ConjugateModel, GlobalState, Prior};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub schedule: Schedule,
    pub method: Method,
    /// Passes through the data; fractional values are allowed.
    pub epochs: f64,
    pub seed: u64,
    #[serde(default)]
    pub empirical_bayes: bool,
    /// Evaluate the full-data bound every this many epochs.
    #[serde(default)]
    pub full_elbo_every: Option<u64>,
    /// Adds `wall_ms` to every metric record. Off by default because it
    /// makes logs differ between otherwise identical runs.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.method.validate()?;
        if !(self.epochs >= 0.0) || !self.epochs.is_finite() {
            return Err(Error::usage("epochs must be a non-negative number"));
        }
        if self.full_elbo_every == Some(0) {
            return Err(Error::usage("full_elbo_every must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps covering `epochs` passes over `n` records.
    pub fn total_steps(&self, n: usize) -> u64 {
        let b = self.schedule.batch_size.min(n.max(1));
        (self.epochs * n as f64 / b as f64).ceil() as u64
    }
}

/// One line of the metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: u64,
    pub epoch: f64,
    pub rho: f64,
    pub elbo_stochastic: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elbo_full: Option<f64>,
    /// Records available when the batch was drawn (streaming runs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heldout: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eb_projected: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
}

/// Everything the driver owns between steps.
#[derive(Debug, Clone)]
pub struct RunState {
    pub state: GlobalState,
    pub prior: Prior,
    pub step: u64,
    pub seed: u64,
    pub log: Vec<MetricRecord>,
    rng: ChaCha8Rng,
}

impl RunState {
    pub fn new(state: GlobalState, prior: Prior, seed: u64, rng: ChaCha8Rng) -> Self {
        Self { state, prior, step: 0, seed, log: Vec::new(), rng }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            seed: self.seed,
            step: self.step,
            state: self.state.clone(),
            prior: self.prior.clone(),
            rng: Some(self.rng.clone()),
            config: None,
        }
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

pub const CHECKPOINT_FORMAT: &str = "trsvi-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized training state. Stored as a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub step: u64,
    pub state: GlobalState,
    pub prior: Prior,
    /// Sampler state, so that a resumed run continues the same sequence.
    #[serde(default)]
    pub rng: Option<ChaCha8Rng>,
    /// Free-form description of the run that produced the checkpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_slice(&std::fs::read(path)?)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Validation(format!("{} is not a checkpoint", path.display())));
        }
        if ckpt.version > CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "checkpoint version {} is newer than supported version {CHECKPOINT_VERSION}",
                ckpt.version
            )));
        }
        ckpt.state.validate()?;
        ckpt.prior.component.validate()?;
        ckpt.prior.weights.validate()?;
        Ok(ckpt)
    }

    pub fn into_run_state(self) -> RunState {
        let rng = self.rng.unwrap_or_else(|| ChaCha8Rng::seed_from_u64(self.seed));
        RunState {
            state: self.state,
            prior: self.prior,
            step: self.step,
            seed: self.seed,
            log: Vec::new(),
            rng,
        }
    }
}

/// Writes metric records as JSON lines. Readers skip a leading
/// `{"header": ...}` line.
pub fn write_metrics<W: Write>(out: &mut W, records: &[MetricRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_metrics<R: BufRead>(input: R) -> Result<Vec<MetricRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || is_header(&line) {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?);
    }
    Ok(out)
}

pub(crate) fn is_header(line: &str) -> bool {
    line.trim_start().starts_with("{\"header\"")
}

/// `b` indices drawn uniformly with replacement from `0..n`.
pub fn sample_indices<R: Rng>(rng: &mut R, n: usize, b: usize) -> Vec<usize> {
    (0..b).map(|_| rng.random_range(0..n)).collect()
}

/// Drives stochastic updates of one model. The caller supplies the
/// records to sample from at every step, which lets the same loop serve
/// fixed datasets and growing databases.
pub struct Trainer<'m, M: ConjugateModel> {
    model: &'m M,
    cfg: FitConfig,
    run: RunState,
}

impl<'m, M: ConjugateModel> Trainer<'m, M> {
    /// Seeds the sampler with `cfg.seed` and draws the initial state from
    /// `init_data`.
    pub fn new(model: &'m M, cfg: FitConfig, init_data: &[M::Datum]) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let state = model.init_state(init_data, &mut rng)?;
        let run = RunState::new(state, model.prior(), cfg.seed, rng);
        Ok(Self { model, cfg, run })
    }

    pub fn from_run_state(model: &'m M, cfg: FitConfig, run: RunState) -> Result<Self> {
        cfg.validate()?;
        model.check_state(&run.state)?;
        Ok(Self { model, cfg, run })
    }

    pub fn config(&self) -> &FitConfig {
        &self.cfg
    }

    pub fn config_mut(&mut self) -> &mut FitConfig {
        &mut self.cfg
    }

    pub fn run_state(&self) -> &RunState {
        &self.run
    }

    pub fn into_run_state(self) -> RunState {
        self.run
    }

    /// Samples a batch from `data`, treating it as a dataset of `n_t`
    /// records, and applies one update. The batch holds
    /// `min(B, data.len())` records.
    pub fn step(&mut self, data: &[M::Datum], n_t: f64) -> Result<&MetricRecord> {
        if data.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        let started = self.cfg.record_wall_time.then(Instant::now);
        let b = self.cfg.schedule.batch_size.min(data.len());
        let idx = sample_indices(&mut self.run.rng, data.len(), b);
        let items: Vec<M::Datum> = idx.iter().map(|&i| data[i].clone()).collect();
        let batch = Batch::new(items, n_t.max(b as f64))?;
        let rho = learning_rate(&self.cfg.schedule, self.run.step, n_t)?;
        let outcome = svi_step(self.model, &self.run.state, &self.run.prior, &batch, rho, &self.cfg.method)?;
        let elbo = elbo_estimate(self.model, &outcome.state, &self.run.prior, &outcome.beliefs, &batch)?;
        let mut eb_projected = None;
        if self.cfg.empirical_bayes {
            let (prior, report): (Prior, EbReport) =
                update_prior(self.model, &self.run.prior, &outcome.state, &outcome.beliefs, rho)?;
            self.run.prior = prior;
            eb_projected = Some(report.projected);
        }
        self.run.state = outcome.state;
        self.run.step += 1;
        let epoch = self.run.step as f64 * b as f64 / data.len() as f64;
        self.run.log.push(MetricRecord {
            step: self.run.step,
            epoch,
            rho,
            elbo_stochastic: elbo,
            elbo_full: None,
            n_t: None,
            heldout: None,
            eb_projected,
            wall_ms: started.map(|t| t.elapsed().as_millis() as u64),
        });
        Ok(self.run.log.last().expect("just pushed"))
    }

    /// Bound on all of `data` with locally optimal beliefs.
    pub fn full_elbo(&self, data: &[M::Datum]) -> Result<f64> {
        full_elbo(self.model, &self.run.state, &self.run.prior, data, self.cfg.method.local_iters())
    }

    pub fn last_record_mut(&mut self) -> Option<&mut MetricRecord> {
        self.run.log.last_mut()
    }
}

/// Runs `cfg.epochs` passes of stochastic updates over `data`.
pub fn fit<M: ConjugateModel>(model: &M, data: &[M::Datum], cfg: &FitConfig) -> Result<RunState> {
    let never = AtomicBool::new(false);
    fit_until(model, data, cfg, None, &never)
}

/// Like [`fit`], optionally resuming from `resume`, and stopping cleanly
/// after the step during which `stop` becomes set.
pub fn fit_until<M: ConjugateModel>(
    model: &M,
    data: &[M::Datum],
    cfg: &FitConfig,
    resume: Option<RunState>,
    stop: &AtomicBool,
) -> Result<RunState> {
    let mut trainer = match resume {
        Some(run) => Trainer::from_run_state(model, cfg.clone(), run)?,
        None => Trainer::new(model, cfg.clone(), data)?,
    };
    if data.is_empty() {
        return Ok(trainer.into_run_state());
    }
    let total = cfg.total_steps(data.len());
    let b = cfg.schedule.batch_size.min(data.len());
    let steps_per_epoch = data.len() as f64 / b as f64;
    while trainer.run.step < total && !stop.load(Ordering::Relaxed) {
        let before = (trainer.run.step as f64 / steps_per_epoch).floor() as u64;
        trainer.step(data, data.len() as f64)?;
        let after = (trainer.run.step as f64 / steps_per_epoch).floor() as u64;
        if let Some(every) = cfg.full_elbo_every {
            if after > before && after.is_multiple_of(every) {
                let value = trainer.full_elbo(data)?;
                trainer.last_record_mut().expect("a step was logged").elbo_full = Some(value);
            }
        }
    }
    Ok(trainer.into_run_state())
}
