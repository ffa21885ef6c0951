//! Streaming SVI, streaming-batch and SVB drivers.
//!
//! All drivers run ingestion and optimization interleaved in one thread:
//! the events of a tick are ingested, then the optimizer runs. This makes
//! every run a deterministic function of the event sequence and the seeds.

use super::db::{CountingUnit, ObservationDb, StreamEvent, StreamRecord};
use crate::error::{Error, Result};
use crate::expfam::{FamilySpec, NaturalParams};
use crate::inference::{
    batch_vb, empirical_bayes_step, learning_rate, svb_update, FitConfig, MetricRecord, RunState, Schedule,
    ScheduleKind, Trainer,
};
use crate::models::{ConjugateModel, GlobalState, Prior};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicBool, Ordering};

/// Held-out score of a global state under a prior.
pub type Evaluator<'a> = dyn Fn(&GlobalState, &Prior) -> Result<f64> + Sync + 'a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamingConfig {
    pub fit: FitConfig,
    /// Optimizer steps after the events of each tick.
    pub steps_per_tick: u64,
    #[serde(default)]
    pub unit: CountingUnit,
    /// Extra steps after the last event.
    #[serde(default)]
    pub tail_steps: u64,
    /// Evaluate every this many ticks (and once at the end).
    #[serde(default)]
    pub eval_every_ticks: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct StreamOutcome<X> {
    pub run: Option<RunState>,
    pub db: ObservationDb<X>,
    pub log: Vec<MetricRecord>,
}

impl<X> StreamOutcome<X> {
    pub fn state(&self) -> Option<&GlobalState> {
        self.run.as_ref().map(|r| &r.state)
    }
}

fn check_sorted(events: &[StreamEvent]) -> Result<()> {
    if events.windows(2).any(|w| w[1].tick < w[0].tick) {
        return Err(Error::usage("events must be ordered by tick"));
    }
    Ok(())
}

/// Groups the events by tick, yielding every tick from 0 to the last one.
fn ticks(events: &[StreamEvent]) -> impl Iterator<Item = (u64, &[StreamEvent])> {
    let last = events.last().map_or(0, |e| e.tick + 1);
    let mut start = 0;
    (0..last).map(move |tick| {
        let end = start + events[start..].iter().take_while(|e| e.tick == tick).count();
        let chunk = &events[start..end];
        start = end;
        (tick, chunk)
    })
}

fn svi_tick<'m, M>(
    model: &'m M,
    cfg: &StreamingConfig,
    db: &ObservationDb<M::Datum>,
    trainer: &mut Option<Trainer<'m, M>>,
) -> Result<()>
where
    M: ConjugateModel,
    M::Datum: StreamRecord,
{
    if db.is_empty() {
        return Ok(());
    }
    let t = match trainer {
        Some(t) => t,
        None => {
            let mut fit = cfg.fit.clone();
            if fit.schedule.kind == ScheduleKind::Streaming {
                fit.schedule.n0 = db.n_t();
            }
            trainer.insert(Trainer::new(model, fit, db.records())?)
        }
    };
    t.step(db.records(), db.n_t())?;
    t.last_record_mut().expect("step logged").n_t = Some(db.n_t());
    Ok(())
}

fn attach_heldout<M: ConjugateModel>(
    eval: Option<&Evaluator<'_>>,
    trainer: &mut Option<Trainer<'_, M>>,
) -> Result<()> {
    if let (Some(f), Some(t)) = (eval, trainer.as_mut()) {
        let score = f(&t.run_state().state, &t.run_state().prior)?;
        if let Some(r) = t.last_record_mut() {
            r.heldout = Some(score);
        }
    }
    Ok(())
}

/// Continuously optimizes the evolving bound over the database with
/// natural-gradient or trust-region steps and the configured schedule
/// (streaming schedules start counting at the first optimizer step).
pub fn streaming_svi_driver<M>(
    model: &M,
    events: &[StreamEvent],
    cfg: &StreamingConfig,
    eval: Option<&Evaluator<'_>>,
    stop: &AtomicBool,
) -> Result<StreamOutcome<M::Datum>>
where
    M: ConjugateModel,
    M::Datum: StreamRecord,
{
    cfg.fit.validate()?;
    check_sorted(events)?;
    let mut db = ObservationDb::new(cfg.unit);
    let mut trainer: Option<Trainer<'_, M>> = None;
    for (tick, chunk) in ticks(events) {
        for e in chunk {
            db.ingest(e)?;
        }
        for _ in 0..cfg.steps_per_tick {
            if stop.load(Ordering::Relaxed) {
                break;
            }
            svi_tick(model, cfg, &db, &mut trainer)?;
        }
        if cfg.eval_every_ticks.is_some_and(|every| (tick + 1) % every == 0) {
            attach_heldout(eval, &mut trainer)?;
        }
    }
    for _ in 0..cfg.tail_steps {
        if stop.load(Ordering::Relaxed) {
            break;
        }
        svi_tick(model, cfg, &db, &mut trainer)?;
    }
    attach_heldout(eval, &mut trainer)?;
    let run = trainer.map(Trainer::into_run_state);
    let log = run.as_ref().map(|r| r.log.clone()).unwrap_or_default();
    Ok(StreamOutcome { run, db, log })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamingBatchConfig {
    /// Largest sample a round trains on.
    pub batch_cap: usize,
    pub iters_per_round: usize,
    pub local_iters: usize,
    /// Ticks ingested between rounds.
    pub ticks_per_round: u64,
    #[serde(default)]
    pub tail_rounds: u64,
    #[serde(default)]
    pub unit: CountingUnit,
    pub seed: u64,
}

/// Repeatedly runs batch coordinate ascent on a fresh sample of
/// `min(B, N_t)` distinct records, starting from the last published
/// parameters. Parameters are published only at round boundaries.
pub fn streaming_batch_driver<M>(
    model: &M,
    events: &[StreamEvent],
    cfg: &StreamingBatchConfig,
    eval: Option<&Evaluator<'_>>,
    stop: &AtomicBool,
) -> Result<StreamOutcome<M::Datum>>
where
    M: ConjugateModel,
    M::Datum: StreamRecord,
{
    if cfg.batch_cap == 0 || cfg.iters_per_round == 0 || cfg.local_iters == 0 || cfg.ticks_per_round == 0 {
        return Err(Error::usage("streaming-batch sizes and iteration counts must be at least 1"));
    }
    check_sorted(events)?;
    let prior = model.prior();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut db = ObservationDb::new(cfg.unit);
    let mut published: Option<GlobalState> = None;
    let mut log = Vec::new();
    let round = |db: &ObservationDb<M::Datum>,
                 published: &mut Option<GlobalState>,
                 log: &mut Vec<MetricRecord>,
                 rng: &mut ChaCha8Rng|
     -> Result<()> {
        if db.is_empty() {
            return Ok(());
        }
        let b = cfg.batch_cap.min(db.len());
        let picks = index::sample(rng, db.len(), b);
        let sample: Vec<M::Datum> = picks.iter().map(|i| db.records()[i].clone()).collect();
        let init = match published.take() {
            Some(s) => s,
            None => model.init_state(&sample, rng)?,
        };
        let out = batch_vb(model, &init, &prior, &sample, cfg.iters_per_round, cfg.local_iters)?;
        let heldout = eval.map(|f| f(&out.state, &prior)).transpose()?;
        log.push(MetricRecord {
            step: log.len() as u64 + 1,
            epoch: 0.0,
            rho: 1.0,
            elbo_stochastic: out.elbo.last().copied().unwrap_or(f64::NEG_INFINITY),
            elbo_full: None,
            n_t: Some(db.n_t()),
            heldout,
            eb_projected: None,
            wall_ms: None,
        });
        *published = Some(out.state);
        Ok(())
    };
    for (tick, chunk) in ticks(events) {
        for e in chunk {
            db.ingest(e)?;
        }
        if (tick + 1) % cfg.ticks_per_round == 0 && !stop.load(Ordering::Relaxed) {
            round(&db, &mut published, &mut log, &mut rng)?;
        }
    }
    for _ in 0..cfg.tail_rounds {
        if stop.load(Ordering::Relaxed) {
            break;
        }
        round(&db, &mut published, &mut log, &mut rng)?;
    }
    let run = published.map(|state| {
        let mut run = RunState::new(state, prior.clone(), cfg.seed, rng.clone());
        run.step = log.len() as u64;
        run.log = log.clone();
        run
    });
    Ok(StreamOutcome { run, db, log })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvbConfig {
    pub batch_size: usize,
    pub local_iters: usize,
    pub seed: u64,
    /// Learn the weight prior by empirical Bayes with this schedule.
    #[serde(default)]
    pub weight_prior_schedule: Option<Schedule>,
    /// Evaluate every this many batches (and once at the end).
    #[serde(default)]
    pub eval_every: Option<u64>,
}

/// `λ₀`: the prior, with every Dirichlet or Beta component entry scaled by
/// an independent Gamma(100, 0.01) draw (NIW components take the model's
/// random initialization) so that components are not exchangeable.
pub fn jittered_prior_state<M: ConjugateModel>(
    model: &M,
    prior: &Prior,
    data: &[M::Datum],
    rng: &mut ChaCha8Rng,
) -> Result<GlobalState> {
    let k = model.num_components();
    let components = match model.component_family() {
        FamilySpec::Niw { .. } => model.init_state(data, rng)?.components,
        family => {
            let jitter = Gamma::new(100.0, 0.01).expect("valid gamma");
            (0..k)
                .map(|_| {
                    let values = prior.component.values().iter().map(|v| v * jitter.sample(rng)).collect();
                    NaturalParams::new(family, values)
                })
                .collect::<Result<_>>()?
        }
    };
    let weights = model.has_global_weights().then(|| prior.weights.clone());
    Ok(GlobalState { components, weights })
}

/// Streaming variational Bayes over records in arrival order, `B` at a
/// time.
pub fn svb_driver<M: ConjugateModel>(
    model: &M,
    arrivals: &[M::Datum],
    cfg: &SvbConfig,
    eval: Option<&Evaluator<'_>>,
) -> Result<(GlobalState, Prior, Vec<MetricRecord>)> {
    if cfg.batch_size == 0 || cfg.local_iters == 0 {
        return Err(Error::usage("SVB batch size and local iterations must be at least 1"));
    }
    let mut prior = model.prior();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let head = &arrivals[..arrivals.len().min(cfg.batch_size)];
    let mut state = jittered_prior_state(model, &prior, head, &mut rng)?;
    let mut log = Vec::new();
    let chunks: Vec<&[M::Datum]> = arrivals.chunks(cfg.batch_size).collect();
    let mut seen = 0usize;
    for (t, chunk) in chunks.iter().enumerate() {
        let (next, beliefs) = svb_update(model, &state, &prior, chunk, cfg.local_iters)?;
        state = next;
        seen += chunk.len();
        if let Some(schedule) = &cfg.weight_prior_schedule {
            let rho = learning_rate(schedule, t as u64, seen as f64)?;
            let targets: Vec<NaturalParams> = beliefs
                .iter()
                .filter_map(|b| model.local_dirichlet(b))
                .map(|g| NaturalParams::new(prior.weights.family(), g.to_vec()))
                .collect::<Result<_>>()?;
            prior.weights = empirical_bayes_step(&prior.weights, &targets, rho)?.0;
        }
        let last = t + 1 == chunks.len();
        let due = cfg.eval_every.is_some_and(|e| (t as u64 + 1).is_multiple_of(e));
        let heldout = if last || due { eval.map(|f| f(&state, &prior)).transpose()? } else { None };
        log.push(MetricRecord {
            step: t as u64 + 1,
            epoch: seen as f64 / arrivals.len() as f64,
            rho: 1.0,
            elbo_stochastic: f64::NAN,
            elbo_full: None,
            n_t: Some(seen as f64),
            heldout,
            eb_projected: None,
            wall_ms: None,
        });
    }
    Ok((state, prior, log))
}
