//! Deterministic discrete-event engine.
//!
//! Events are ordered by `(time, lane, seq)` with time in integer
//! microseconds. The engine is single-threaded; separate runs share nothing
//! and can be executed in parallel.

mod engine;
mod queue;
mod result;
pub mod rng;
mod time;

pub use engine::{run, run_with, run_with_model, RunOptions};
pub use queue::{EventKey, EventQueue, Lane};
pub use result::{
    LinkSummary, NodeSummary, ProposeOutcome, RunResult, TraceEvent, TraceKind, RESULT_FORMAT_VERSION,
};
pub use time::SimTime;
