//! Stochastic optimization of the global variational parameters:
//! natural-gradient and trust-region steps, learning-rate schedules,
//! empirical Bayes, and the SVB and batch baselines.

mod baselines;
mod eb;
mod run;
mod schedule;
mod step;

pub use baselines::{batch_vb, svb_update, BatchOutcome};
pub use eb::{empirical_bayes_step, update_prior, EbReport, PRIOR_FLOOR};
pub(crate) use run::is_header;
pub use run::{
    fit, fit_until, read_metrics, sample_indices, write_metrics, Checkpoint, FitConfig, MetricRecord,
    RunState, Trainer, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use schedule::{learning_rate, Schedule, ScheduleKind};
pub use step::{
    natural_gradient_step, svi_natural_gradient, svi_step, trust_region_step, InitStrategy, Method,
    StepOutcome, TrustRegionConfig,
};
