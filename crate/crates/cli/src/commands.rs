//! The four subcommands.

use crate::config::{
    DataFormat, Generator, MethodKind, Metric, Mode, ModelConfig, RunConfig, SyntheticConfig,
};
use crate::fail::CliError;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use trsvi::data::{
    binarize, gen_bernoulli_mixture, gen_digit_like, gen_gmm, gen_lda, load_bow, split_tokens, Corpus,
    DenseDataset,
};
use trsvi::eval::{
    effective_components, evaluate_ranking, lda_heldout_loglik, mixture_heldout_loglik, EvalReport,
    RankingTask,
};
use trsvi::inference::{
    batch_vb, fit_until, Checkpoint, FitConfig, Method, MetricRecord, RunState, Schedule, TrustRegionConfig,
};
use trsvi::models::{BernoulliMixture, ConjugateModel, Document, GaussianMixture, Lda, Mixture};
use trsvi::streaming::{
    read_events, simulate_arrivals, simulate_stream, streaming_batch_driver, streaming_svi_driver,
    svb_driver, write_events, Evaluator, EventKind, StreamEvent, StreamRecord, StreamSimConfig,
    StreamingBatchConfig, StreamingConfig, SvbConfig,
};
use trsvi::{linalg::Matrix, NiwParams};

enum Loaded {
    Dense {
        train: DenseDataset,
        test: Option<DenseDataset>,
    },
    Text {
        train: Corpus,
        test: Option<Corpus>,
        train_tokens: Vec<Vec<usize>>,
        test_tokens: Option<Vec<Vec<usize>>>,
    },
}

impl Loaded {
    fn hash(&self) -> String {
        match self {
            Loaded::Dense { train, .. } => train.fingerprint(),
            Loaded::Text { train, .. } => train.fingerprint(),
        }
    }
}

enum AnyModel {
    Bernoulli(BernoulliMixture),
    Gaussian(GaussianMixture),
    Lda(Lda),
}

fn expand(doc: &Document) -> Vec<usize> {
    doc.pairs().flat_map(|(w, c)| std::iter::repeat_n(w, c as usize)).collect()
}

fn corpus_tokens(corpus: &Corpus) -> Vec<Vec<usize>> {
    corpus.docs.iter().map(expand).collect()
}

fn detect(path: &Path, format: DataFormat, lda: bool) -> DataFormat {
    if format != DataFormat::Auto {
        return format;
    }
    match path.extension().and_then(|e| e.to_str()) {
        _ if lda => DataFormat::Bow,
        Some("csv") => DataFormat::Csv,
        _ => DataFormat::Dense,
    }
}

fn load_dense(path: &Path, format: DataFormat, binary: bool) -> Result<DenseDataset, CliError> {
    Ok(match format {
        DataFormat::Csv => DenseDataset::read_csv(
            BufReader::new(
                File::open(path)
                    .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?,
            ),
            binary,
        )?,
        DataFormat::Dense => DenseDataset::load(path)?,
        _ => return Err(CliError::Config("dense models need dense or csv data".into())),
    })
}

fn synthesize(s: &SyntheticConfig) -> Result<Loaded, CliError> {
    let total = s.n + s.test_n;
    let split_dense = |data: DenseDataset| -> Loaded {
        let train = data.slice(0..s.n);
        let test = (s.test_n > 0).then(|| data.slice(s.n..total));
        Loaded::Dense { train, test }
    };
    Ok(match s.generator {
        Generator::BernoulliMixture => {
            split_dense(gen_bernoulli_mixture(s.components, s.dim, total, s.separation, s.seed)?.0)
        }
        Generator::Digits => split_dense(gen_digit_like(s.components, s.dim, total, s.seed)?.0),
        Generator::Gmm => split_dense(gen_gmm(s.components, s.dim, total, s.separation, s.seed)?.0),
        Generator::Lda => {
            let (corpus, _, tokens) =
                gen_lda(s.components, s.dim, total, s.doc_length, s.alpha, s.eta, s.seed)?;
            let train = Corpus::new(corpus.docs[..s.n].to_vec(), s.dim)?;
            let test = (s.test_n > 0).then(|| Corpus::new(corpus.docs[s.n..].to_vec(), s.dim)).transpose()?;
            let test_tokens = (s.test_n > 0).then(|| tokens[s.n..].to_vec());
            Loaded::Text { train, test, train_tokens: tokens[..s.n].to_vec(), test_tokens }
        }
    })
}

fn load_data(cfg: &RunConfig) -> Result<Loaded, CliError> {
    let bernoulli = matches!(cfg.model, ModelConfig::BernoulliMixture { .. });
    let mut loaded = match (&cfg.data.synthetic, &cfg.data.path) {
        (Some(s), _) => synthesize(s)?,
        (None, Some(path)) => {
            let format = detect(path, cfg.data.format, cfg.model.is_lda());
            if cfg.model.is_lda() {
                if format != DataFormat::Bow {
                    return Err(CliError::Config("LDA needs bag-of-words data".into()));
                }
                let train = load_bow(path)?;
                let test = cfg.data.test_path.as_deref().map(load_bow).transpose()?;
                // Word order within a file document is unknown; reveal
                // order is a seeded shuffle of its tokens.
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.stream.seed);
                let mut train_tokens = corpus_tokens(&train);
                for t in &mut train_tokens {
                    t.shuffle(&mut rng);
                }
                let test_tokens = test.as_ref().map(corpus_tokens);
                Loaded::Text { train, test, train_tokens, test_tokens }
            } else {
                let binary = bernoulli && !cfg.data.binarize;
                let train = load_dense(path, format, binary)?;
                let test = cfg
                    .data
                    .test_path
                    .as_deref()
                    .map(|p| load_dense(p, detect(p, cfg.data.format, false), binary))
                    .transpose()?;
                Loaded::Dense { train, test }
            }
        }
        (None, None) => return Err(CliError::Config("no data configured".into())),
    };
    if let Loaded::Dense { train, test } = &mut loaded {
        if bernoulli {
            if cfg.data.binarize && !train.is_binary() {
                *train = binarize(train, cfg.run.seed)?;
                if let Some(t) = test.as_mut() {
                    *t = binarize(t, cfg.run.seed.wrapping_add(1))?;
                }
            }
            for d in std::iter::once(&*train).chain(test.as_ref()) {
                if !d.is_binary() {
                    return Err(CliError::Data(
                        "Bernoulli mixtures need binary data; set data.binarize = true".into(),
                    ));
                }
            }
        }
        if let Some(t) = test {
            if t.d() != train.d() {
                return Err(CliError::Data(format!(
                    "dimension mismatch: training data has D={}, test data has D={}",
                    train.d(),
                    t.d()
                )));
            }
        }
    }
    if let Loaded::Text { train, test: Some(t), .. } = &loaded {
        if t.vocab != train.vocab {
            return Err(CliError::Data(format!(
                "dimension mismatch: training vocabulary V={}, test vocabulary V={}",
                train.vocab, t.vocab
            )));
        }
    }
    Ok(loaded)
}

fn build_model(cfg: &RunConfig, data: &Loaded) -> Result<AnyModel, CliError> {
    let dim = match data {
        Loaded::Dense { train, .. } => train.d(),
        Loaded::Text { train, .. } => train.vocab,
    };
    Ok(match &cfg.model {
        &ModelConfig::BernoulliMixture { components, a, b, alpha } => {
            AnyModel::Bernoulli(Mixture::bernoulli(components, dim, a, b, alpha)?)
        }
        ModelConfig::GaussianMixture { components, s, nu, psi_scale, mean, alpha } => {
            let m = mean.clone().unwrap_or_else(|| vec![0.0; dim]);
            if m.len() != dim {
                return Err(CliError::Data(format!(
                    "dimension mismatch: model.mean has {} entries, data has D={dim}",
                    m.len()
                )));
            }
            let prior = NiwParams {
                s: *s,
                m,
                psi: Matrix::scaled_identity(dim, *psi_scale),
                nu: nu.unwrap_or(dim as f64 + 2.0),
            };
            AnyModel::Gaussian(Mixture::gaussian(*components, &prior, *alpha)?)
        }
        &ModelConfig::Lda { components, alpha, eta } => {
            AnyModel::Lda(Lda::symmetric(components, dim, alpha, eta)?)
        }
    })
}

fn fit_config(cfg: &RunConfig) -> FitConfig {
    let s = &cfg.schedule;
    let method = match cfg.run.method {
        MethodKind::NaturalGradient => Method::NaturalGradient { local_iters: cfg.run.local_iters },
        _ => Method::TrustRegion(TrustRegionConfig {
            inner_iters: cfg.trust_region.inner_iters,
            local_iters: cfg.run.local_iters,
            init: cfg.trust_region.init,
            tol: cfg.trust_region.tol,
        }),
    };
    FitConfig {
        schedule: Schedule { kind: s.kind, kappa: s.kappa, tau: s.tau, batch_size: s.batch_size, n0: 0.0 },
        method,
        epochs: cfg.run.epochs,
        seed: cfg.run.seed,
        empirical_bayes: cfg.run.empirical_bayes,
        full_elbo_every: cfg.run.full_elbo_every,
        record_wall_time: cfg.run.record_wall_time,
    }
}

fn svb_config(cfg: &RunConfig) -> SvbConfig {
    let s = &cfg.schedule;
    SvbConfig {
        batch_size: s.batch_size,
        local_iters: cfg.run.local_iters,
        seed: cfg.run.seed,
        weight_prior_schedule: cfg
            .stream
            .svb_learn_alpha
            .then(|| Schedule::classic(s.kappa, s.tau, s.batch_size)),
        eval_every: cfg.stream.eval_every_ticks,
    }
}

fn header(cfg: &RunConfig, data_hash: &str) -> serde_json::Value {
    json!({ "header": { "config": cfg.echo(), "data_hash": data_hash } })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn write_outputs(cfg: &RunConfig, data_hash: &str, run: &RunState) -> Result<(), CliError> {
    if let Some(path) = &cfg.output.metrics {
        let mut out = create(path)?;
        serde_json::to_writer(&mut out, &header(cfg, data_hash))?;
        out.write_all(b"\n")?;
        trsvi::inference::write_metrics(&mut out, &run.log)?;
        out.flush()?;
    }
    if let Some(path) = &cfg.output.table {
        let mut out = create(path)?;
        writeln!(out, "# {}", header(cfg, data_hash))?;
        writeln!(out, "step,epoch,rho,elbo_stochastic,elbo_full,n_t,heldout")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &run.log {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.step,
                r.epoch,
                r.rho,
                r.elbo_stochastic,
                opt(r.elbo_full),
                opt(r.n_t),
                opt(r.heldout)
            )?;
        }
        out.flush()?;
    }
    if let Some(path) = &cfg.output.checkpoint {
        let mut ckpt = run.checkpoint();
        ckpt.config = Some(json!({ "config": cfg.echo(), "data_hash": data_hash }));
        ckpt.save(path)?;
    }
    Ok(())
}

fn with_heldout(log: &mut [MetricRecord], score: Option<f64>) {
    if let (Some(r), Some(s)) = (log.last_mut(), score) {
        r.heldout = Some(s);
    }
}

fn run_state(
    state: trsvi::models::GlobalState,
    prior: trsvi::models::Prior,
    seed: u64,
    log: Vec<MetricRecord>,
) -> RunState {
    let mut run = RunState::new(state, prior, seed, ChaCha8Rng::seed_from_u64(seed));
    run.step = log.len() as u64;
    run.log = log;
    run
}

fn train_with<M: ConjugateModel>(
    model: &M,
    data: &[M::Datum],
    eval: Option<&Evaluator<'_>>,
    cfg: &RunConfig,
    stop: &AtomicBool,
) -> Result<RunState, CliError> {
    let seed = cfg.run.seed;
    let mut run = match cfg.run.method {
        MethodKind::NaturalGradient | MethodKind::TrustRegion => {
            let resume = match &cfg.run.resume {
                Some(path) => Some(Checkpoint::load(path)?.into_run_state()),
                None => None,
            };
            fit_until(model, data, &fit_config(cfg), resume, stop)?
        }
        MethodKind::Svb => {
            let (state, prior, log) = svb_driver(model, data, &svb_config(cfg), None)?;
            run_state(state, prior, seed, log)
        }
        MethodKind::Batch => {
            let prior = model.prior();
            let init = model.init_state(data, &mut ChaCha8Rng::seed_from_u64(seed))?;
            let out = batch_vb(model, &init, &prior, data, cfg.batch.iters, cfg.run.local_iters)?;
            let log = out
                .elbo
                .iter()
                .enumerate()
                .map(|(i, &e)| MetricRecord {
                    step: i as u64 + 1,
                    epoch: i as f64 + 1.0,
                    rho: 1.0,
                    elbo_stochastic: e,
                    elbo_full: Some(e),
                    n_t: None,
                    heldout: None,
                    eb_projected: None,
                    wall_ms: None,
                })
                .collect();
            run_state(out.state, prior, seed, log)
        }
        MethodKind::StreamingBatch => {
            return Err(CliError::Config("run.method = \"streaming-batch\" runs in stream mode".into()))
        }
    };
    if let Some(f) = eval {
        let score = f(&run.state, &run.prior)?;
        with_heldout(&mut run.log, Some(score));
    }
    Ok(run)
}

fn stream_with<M>(
    model: &M,
    events: &[StreamEvent],
    full: &[M::Datum],
    eval: Option<&Evaluator<'_>>,
    cfg: &RunConfig,
    stop: &AtomicBool,
) -> Result<Option<RunState>, CliError>
where
    M: ConjugateModel,
    M::Datum: StreamRecord,
{
    let st = &cfg.stream;
    match cfg.run.method {
        MethodKind::NaturalGradient | MethodKind::TrustRegion => {
            let scfg = StreamingConfig {
                fit: fit_config(cfg),
                steps_per_tick: st.steps_per_tick,
                unit: st.unit,
                tail_steps: st.tail_steps,
                eval_every_ticks: st.eval_every_ticks,
            };
            Ok(streaming_svi_driver(model, events, &scfg, eval, stop)?.run)
        }
        MethodKind::StreamingBatch => {
            let bcfg = StreamingBatchConfig {
                batch_cap: cfg.batch.cap,
                iters_per_round: cfg.batch.iters,
                local_iters: cfg.run.local_iters,
                ticks_per_round: cfg.batch.ticks_per_round,
                tail_rounds: cfg.batch.tail_rounds,
                unit: st.unit,
                seed: cfg.run.seed,
            };
            Ok(streaming_batch_driver(model, events, &bcfg, eval, stop)?.run)
        }
        MethodKind::Svb => {
            // SVB sees a whole record as soon as it arrives.
            let arrived = events.iter().filter(|e| e.kind == EventKind::NewRecord).count();
            if arrived > full.len() {
                return Err(CliError::Data(format!(
                    "event log has {arrived} records but the data has {}",
                    full.len()
                )));
            }
            if arrived == 0 {
                return Ok(None);
            }
            let (state, prior, log) = svb_driver(model, &full[..arrived], &svb_config(cfg), eval)?;
            Ok(Some(run_state(state, prior, cfg.run.seed, log)))
        }
        MethodKind::Batch => Err(CliError::Config("run.method = \"batch\" is not a streaming method".into())),
    }
}

fn lda_split(cfg: &RunConfig, tokens: &[Vec<usize>]) -> Result<(Vec<Document>, Vec<Document>), CliError> {
    Ok(split_tokens(tokens, cfg.data.heldout_fraction, cfg.run.seed)?)
}

fn mixture_eval(
    test: &DenseDataset,
) -> impl Fn(&trsvi::models::GlobalState, &trsvi::models::Prior) -> trsvi::Result<f64> + Sync + '_ {
    let rows = test.rows();
    move |state, _| mixture_heldout_loglik(state, &rows).map(|r| r.mean)
}

fn finish(cfg: &RunConfig, hash: &str, run: Option<RunState>, stop: &AtomicBool) -> Result<(), CliError> {
    match run {
        Some(run) => write_outputs(cfg, hash, &run)?,
        None => return Err(CliError::Data("the stream delivered no records".into())),
    }
    if stop.load(Ordering::Relaxed) {
        return Err(CliError::Interrupted);
    }
    Ok(())
}

pub fn train(cfg: &RunConfig, stop: &AtomicBool) -> Result<(), CliError> {
    cfg.validate(Mode::Train)?;
    let data = load_data(cfg)?;
    let hash = data.hash();
    let model = build_model(cfg, &data)?;
    let run = match (&model, &data) {
        (AnyModel::Bernoulli(m), Loaded::Dense { train, test }) => {
            let f = test.as_ref().map(mixture_eval);
            train_with(m, &train.rows(), f.as_ref().map(|f| f as &Evaluator<'_>), cfg, stop)?
        }
        (AnyModel::Gaussian(m), Loaded::Dense { train, test }) => {
            let f = test.as_ref().map(mixture_eval);
            train_with(m, &train.rows(), f.as_ref().map(|f| f as &Evaluator<'_>), cfg, stop)?
        }
        (AnyModel::Lda(m), Loaded::Text { train, test_tokens, .. }) => {
            let split = test_tokens.as_deref().map(|t| lda_split(cfg, t)).transpose()?;
            let iters = cfg.run.local_iters;
            let f = split.as_ref().map(|(obs, held)| {
                move |s: &_, p: &_| lda_heldout_loglik(m, s, p, obs, held, iters).map(|r| r.value)
            });
            train_with(m, &train.docs, f.as_ref().map(|f| f as &Evaluator<'_>), cfg, stop)?
        }
        _ => unreachable!("data is loaded for the configured model"),
    };
    finish(cfg, &hash, Some(run), stop)
}

fn simulate(cfg: &RunConfig, data: &Loaded) -> Result<Vec<StreamEvent>, CliError> {
    let st = &cfg.stream;
    Ok(match data {
        Loaded::Text { train_tokens, .. } => simulate_stream(
            &StreamSimConfig {
                rate: st.rate,
                reveal_prob: st.reveal_prob,
                delay: st.delay,
                ticks: st.ticks,
                initial: st.initial,
                seed: st.seed,
            },
            train_tokens,
        )?,
        Loaded::Dense { train, .. } => {
            simulate_arrivals(st.rate, st.ticks, st.initial, &train.rows(), st.seed)?
        }
    })
}

fn run_events(
    cfg: &RunConfig,
    data: &Loaded,
    events: &[StreamEvent],
    stop: &AtomicBool,
) -> Result<(), CliError> {
    let hash = data.hash();
    let model = build_model(cfg, data)?;
    let run = match (&model, data) {
        (AnyModel::Bernoulli(m), Loaded::Dense { train, test }) => {
            let f = test.as_ref().map(mixture_eval);
            stream_with(m, events, &train.rows(), f.as_ref().map(|f| f as &Evaluator<'_>), cfg, stop)?
        }
        (AnyModel::Gaussian(m), Loaded::Dense { train, test }) => {
            let f = test.as_ref().map(mixture_eval);
            stream_with(m, events, &train.rows(), f.as_ref().map(|f| f as &Evaluator<'_>), cfg, stop)?
        }
        (AnyModel::Lda(m), Loaded::Text { train, test_tokens, .. }) => {
            let split = test_tokens.as_deref().map(|t| lda_split(cfg, t)).transpose()?;
            let iters = cfg.run.local_iters;
            let f = split.as_ref().map(|(obs, held)| {
                move |s: &_, p: &_| lda_heldout_loglik(m, s, p, obs, held, iters).map(|r| r.value)
            });
            stream_with(m, events, &train.docs, f.as_ref().map(|f| f as &Evaluator<'_>), cfg, stop)?
        }
        _ => unreachable!("data is loaded for the configured model"),
    };
    finish(cfg, &hash, run, stop)
}

pub fn stream(cfg: &RunConfig, stop: &AtomicBool) -> Result<(), CliError> {
    cfg.validate(Mode::Stream)?;
    let data = load_data(cfg)?;
    let events = simulate(cfg, &data)?;
    if let Some(path) = &cfg.output.events {
        let mut out = create(path)?;
        serde_json::to_writer(&mut out, &header(cfg, &data.hash()))?;
        out.write_all(b"\n")?;
        write_events(&mut out, &events)?;
        out.flush()?;
    }
    run_events(cfg, &data, &events, stop)
}

pub fn replay(cfg: &RunConfig, stop: &AtomicBool) -> Result<(), CliError> {
    cfg.validate(Mode::Replay)?;
    let path = cfg.stream.events.as_ref().expect("validated");
    let file = File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open event log {}: {e}", path.display())))?;
    let events = read_events(BufReader::new(file))?;
    let data = load_data(cfg)?;
    run_events(cfg, &data, &events, stop)
}

fn check_compatible<M: ConjugateModel>(model: &M, ckpt: &Checkpoint) -> Result<(), CliError> {
    model.check_state(&ckpt.state).map_err(|e| {
        let have = ckpt.state.components.first().map(|c| format!("{:?}", c.family()));
        CliError::Data(format!(
            "dimension mismatch: checkpoint has {} components of {}, data needs {} of {:?} ({e})",
            ckpt.state.num_components(),
            have.unwrap_or_else(|| "nothing".into()),
            model.num_components(),
            model.component_family()
        ))
    })
}

fn ranking_tasks(cfg: &RunConfig, docs: &[Document]) -> Vec<RankingTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    docs.iter()
        .map(|d| {
            let mut ids = d.ids().to_vec();
            ids.shuffle(&mut rng);
            let h = (cfg.eval.ranking_heldout_fraction * ids.len() as f64).round() as usize;
            let heldout = ids.split_off(ids.len() - h.min(ids.len()));
            RankingTask { train: ids, heldout, m: cfg.eval.m }
        })
        .collect()
}

pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate(Mode::Eval)?;
    let ckpt = Checkpoint::load(cfg.eval.checkpoint.as_ref().expect("validated"))?;
    let data = load_data(cfg)?;
    let model = build_model(cfg, &data)?;
    let metric = cfg.eval.metric.expect("validated");
    let iters = cfg.run.local_iters;
    let (state, prior) = (&ckpt.state, &ckpt.prior);
    let mut report = match (&model, &data) {
        (AnyModel::Bernoulli(_) | AnyModel::Gaussian(_), Loaded::Dense { train, test }) => {
            let set = test.as_ref().unwrap_or(train);
            match &model {
                AnyModel::Bernoulli(m) => check_compatible(m, &ckpt)?,
                AnyModel::Gaussian(m) => check_compatible(m, &ckpt)?,
                AnyModel::Lda(_) => unreachable!(),
            }
            let rows = set.rows();
            let mut report = match metric {
                Metric::MixtureLoglik => {
                    let r = mixture_heldout_loglik(state, &rows)?;
                    let mut report =
                        EvalReport::from_records("mixture_heldout_loglik", r.per_record, String::new());
                    if r.covariance_fallbacks > 0 {
                        report.notes.push(format!("covariance_fallbacks={}", r.covariance_fallbacks));
                    }
                    report
                }
                Metric::EffectiveComponents => {
                    let k = match &model {
                        AnyModel::Bernoulli(m) => effective_components(m, state, prior, &rows, iters)?,
                        AnyModel::Gaussian(m) => effective_components(m, state, prior, &rows, iters)?,
                        AnyModel::Lda(_) => unreachable!(),
                    };
                    EvalReport::from_records("effective_components", vec![k as f64], String::new())
                }
                _ => unreachable!("validated against the model"),
            };
            report.data_hash = set.fingerprint();
            report
        }
        (AnyModel::Lda(m), Loaded::Text { train, test, train_tokens, test_tokens }) => {
            check_compatible(m, &ckpt)?;
            let (set, tokens) = match (test, test_tokens) {
                (Some(t), Some(tok)) => (t, tok),
                _ => (train, train_tokens),
            };
            let mut report = match metric {
                Metric::LdaHeldout => {
                    let (obs, held) = lda_split(cfg, tokens)?;
                    lda_heldout_loglik(m, state, prior, &obs, &held, iters)?
                }
                Metric::Ranking => {
                    let s = evaluate_ranking(m, state, prior, &ranking_tasks(cfg, &set.docs), iters)?;
                    let mut report = EvalReport::from_records(
                        &format!("recall_at_{}", cfg.eval.m),
                        vec![s.recall],
                        String::new(),
                    );
                    report.per_record = None;
                    report.notes.push(format!("precision_at_{}={}", cfg.eval.m, s.precision));
                    report.notes.push(format!("evaluated={} skipped={}", s.evaluated, s.skipped));
                    report
                }
                Metric::EffectiveComponents => {
                    let k = effective_components(m, state, prior, &set.docs, iters)?;
                    EvalReport::from_records("effective_components", vec![k as f64], String::new())
                }
                Metric::MixtureLoglik => unreachable!("validated against the model"),
            };
            report.data_hash = set.fingerprint();
            report
        }
        _ => unreachable!("data is loaded for the configured model"),
    };
    report.config = json!({ "config": cfg.echo(), "checkpoint_step": ckpt.step });
    match &cfg.output.report {
        Some(path) => {
            let mut out = create(path)?;
            report.write_json(&mut out)?;
            out.flush()?;
        }
        None => report.write_json(&mut std::io::stdout().lock())?,
    }
    if let Some(path) = &cfg.output.table {
        let mut out = create(path)?;
        writeln!(out, "# {}", json!({ "header": { "config": cfg.echo(), "data_hash": report.data_hash } }))?;
        report.write_csv(&mut out)?;
        out.flush()?;
    }
    Ok(())
}
