//! Run configuration: a TOML file plus `--set key=value` overrides.

use crate::fail::CliError;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use trsvi::data::DocLength;
use trsvi::inference::{InitStrategy, ScheduleKind};
use trsvi::streaming::CountingUnit;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub trust_region: TrustRegionSection,
    #[serde(default)]
    pub batch: BatchSection,
    #[serde(default)]
    pub stream: StreamSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    BernoulliMixture {
        components: usize,
        #[serde(default = "one")]
        a: f64,
        #[serde(default = "one")]
        b: f64,
        #[serde(default = "one")]
        alpha: f64,
    },
    GaussianMixture {
        components: usize,
        #[serde(default = "one")]
        s: f64,
        /// Defaults to `D + 2`.
        #[serde(default)]
        nu: Option<f64>,
        /// `Ψ = psi_scale · I`
        #[serde(default = "one")]
        psi_scale: f64,
        /// Defaults to the origin.
        #[serde(default)]
        mean: Option<Vec<f64>>,
        #[serde(default = "one")]
        alpha: f64,
    },
    Lda {
        components: usize,
        #[serde(default = "tenth")]
        alpha: f64,
        #[serde(default = "tenth")]
        eta: f64,
    },
}

impl ModelConfig {
    pub fn components(&self) -> usize {
        match *self {
            ModelConfig::BernoulliMixture { components, .. }
            | ModelConfig::GaussianMixture { components, .. }
            | ModelConfig::Lda { components, .. } => components,
        }
    }

    pub fn is_lda(&self) -> bool {
        matches!(self, ModelConfig::Lda { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    #[default]
    Auto,
    Bow,
    Dense,
    Csv,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    /// Held-out records for evaluation.
    pub test_path: Option<PathBuf>,
    #[serde(default)]
    pub format: DataFormat,
    /// Sample grayscale dense data to {0, 1} before training.
    #[serde(default)]
    pub binarize: bool,
    /// Fraction of every test document's words that is held out.
    #[serde(default = "half")]
    pub heldout_fraction: f64,
    pub synthetic: Option<SyntheticConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    BernoulliMixture,
    Digits,
    Gmm,
    Lda,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub generator: Generator,
    pub components: usize,
    /// Dimension, vocabulary size, or image side for `digits`.
    pub dim: usize,
    pub n: usize,
    #[serde(default)]
    pub test_n: usize,
    #[serde(default = "three")]
    pub separation: f64,
    #[serde(default = "default_doc_length")]
    pub doc_length: DocLength,
    #[serde(default = "tenth")]
    pub alpha: f64,
    #[serde(default = "tenth")]
    pub eta: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MethodKind {
    #[serde(rename = "ng")]
    NaturalGradient,
    #[default]
    #[serde(rename = "tr")]
    TrustRegion,
    #[serde(rename = "svb")]
    Svb,
    #[serde(rename = "batch")]
    Batch,
    #[serde(rename = "streaming-batch")]
    StreamingBatch,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub method: MethodKind,
    #[serde(default = "one")]
    pub epochs: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "ten")]
    pub local_iters: usize,
    #[serde(default)]
    pub empirical_bayes: bool,
    pub full_elbo_every: Option<u64>,
    #[serde(default)]
    pub record_wall_time: bool,
    /// Continue from this checkpoint.
    pub resume: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default = "classic")]
    pub kind: ScheduleKind,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustRegionSection {
    #[serde(default = "two")]
    pub inner_iters: usize,
    #[serde(default = "uniform")]
    pub init: InitStrategy,
    pub tol: Option<f64>,
}

impl Default for TrustRegionSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSection {
    /// Coordinate-ascent sweeps per run (`batch`) or per round
    /// (`streaming-batch`).
    #[serde(default = "hundred")]
    pub iters: usize,
    /// Largest sample of a streaming-batch round.
    #[serde(default = "thousand")]
    pub cap: usize,
    #[serde(default = "one_u64")]
    pub ticks_per_round: u64,
    #[serde(default)]
    pub tail_rounds: u64,
}

impl Default for BatchSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSection {
    #[serde(default = "one")]
    pub rate: f64,
    #[serde(default = "one")]
    pub reveal_prob: f64,
    #[serde(default)]
    pub delay: u64,
    #[serde(default = "thousand_u64")]
    pub ticks: u64,
    #[serde(default)]
    pub initial: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_u64")]
    pub steps_per_tick: u64,
    #[serde(default)]
    pub tail_steps: u64,
    pub eval_every_ticks: Option<u64>,
    #[serde(default)]
    pub unit: CountingUnit,
    /// Event log to replay.
    pub events: Option<PathBuf>,
    /// Learn the weight prior of SVB by empirical Bayes.
    #[serde(default)]
    pub svb_learn_alpha: bool,
}

impl Default for StreamSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    MixtureLoglik,
    LdaHeldout,
    Ranking,
    EffectiveComponents,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub metric: Option<Metric>,
    pub checkpoint: Option<PathBuf>,
    /// Ranking cutoff.
    #[serde(default = "twenty")]
    pub m: usize,
    #[serde(default = "half")]
    pub ranking_heldout_fraction: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub metrics: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
    /// CSV table of the metric records or per-record scores.
    pub table: Option<PathBuf>,
    /// Event log written by `stream`.
    pub events: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}
fn one_u64() -> u64 {
    1
}
fn two() -> usize {
    2
}
fn three() -> f64 {
    3.0
}
fn ten() -> usize {
    10
}
fn twenty() -> usize {
    20
}
fn hundred() -> usize {
    100
}
fn thousand() -> usize {
    1000
}
fn thousand_u64() -> u64 {
    1000
}
fn tenth() -> f64 {
    0.1
}
fn half() -> f64 {
    0.5
}
fn classic() -> ScheduleKind {
    ScheduleKind::Classic
}
fn default_kappa() -> f64 {
    0.7
}
fn default_tau() -> f64 {
    10.0
}
fn default_batch() -> usize {
    100
}
fn uniform() -> InitStrategy {
    InitStrategy::UniformBeliefs
}
fn default_doc_length() -> DocLength {
    DocLength::Poisson { mean: 100.0 }
}

/// Which subcommand a configuration is validated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Stream,
    Eval,
    Replay,
}

/// Parses `--set` values as TOML scalars or arrays, falling back to a bare
/// string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key {key:?}")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override {key:?}: {part} is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides)
    }

    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim().replace('\n', " ")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string().trim().replace('\n', " ")))
    }

    /// Cross-field checks for one subcommand.
    pub fn validate(&self, mode: Mode) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
        if self.model.components() == 0 {
            return bad("model.components must be at least 1");
        }
        if self.data.path.is_none() && self.data.synthetic.is_none() {
            return bad("either data.path or data.synthetic is required");
        }
        if self.data.path.is_some() && self.data.synthetic.is_some() {
            return bad("data.path and data.synthetic are mutually exclusive");
        }
        if let Some(s) = &self.data.synthetic {
            let lda_gen = s.generator == Generator::Lda;
            if lda_gen != self.model.is_lda() {
                return bad("data.synthetic.generator does not produce data for this model");
            }
            if s.generator == Generator::Gmm && !matches!(self.model, ModelConfig::GaussianMixture { .. }) {
                return bad("the gmm generator produces real-valued data");
            }
            if matches!(s.generator, Generator::BernoulliMixture | Generator::Digits)
                && !matches!(self.model, ModelConfig::BernoulliMixture { .. })
            {
                return bad("binary generators require model.kind = \"bernoulli_mixture\"");
            }
        }
        if self.schedule.kind == ScheduleKind::Streaming && mode == Mode::Train {
            return bad("schedule.kind = \"streaming\" cannot be used with train");
        }
        if !(self.run.epochs >= 0.0) || !self.run.epochs.is_finite() {
            return bad("run.epochs must be a non-negative number");
        }
        if self.run.local_iters == 0 {
            return bad("run.local_iters must be at least 1");
        }
        if self.schedule.batch_size == 0 {
            return bad("schedule.batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.data.heldout_fraction) {
            return bad("data.heldout_fraction must lie in [0, 1)");
        }
        match mode {
            Mode::Stream | Mode::Replay => {
                if self.run.method == MethodKind::Batch {
                    return bad("run.method = \"batch\" is not a streaming method");
                }
                if mode == Mode::Replay && self.stream.events.is_none() {
                    return bad("replay requires stream.events");
                }
            }
            Mode::Eval => {
                if self.eval.checkpoint.is_none() {
                    return bad("eval requires eval.checkpoint");
                }
                let Some(metric) = self.eval.metric else {
                    return bad("eval requires eval.metric");
                };
                let lda_metric = matches!(metric, Metric::LdaHeldout | Metric::Ranking);
                if lda_metric != self.model.is_lda() && metric != Metric::EffectiveComponents {
                    return bad("eval.metric does not apply to this model");
                }
            }
            Mode::Train => {}
        }
        Ok(())
    }

    /// The configuration as JSON without the parts that only say where
    /// artifacts go, so that a replay writing elsewhere echoes the same
    /// header.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("output");
            if let Some(stream) = map.get_mut("stream").and_then(|s| s.as_object_mut()) {
                stream.remove("events");
            }
        }
        v
    }
}
