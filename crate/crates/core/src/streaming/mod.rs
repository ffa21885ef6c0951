//! Growing observation databases, simulated arrival streams and the
//! streaming drivers.

mod db;
mod drivers;
mod sim;

pub use db::{
    read_events, write_events, CountingUnit, EventKind, ObservationDb, SharedDb, StreamEvent, StreamRecord,
};
pub use drivers::{
    jittered_prior_state, streaming_batch_driver, streaming_svi_driver, svb_driver, Evaluator, StreamOutcome,
    StreamingBatchConfig, StreamingConfig, SvbConfig,
};
pub use sim::{simulate_arrivals, simulate_stream, StreamSimConfig};
