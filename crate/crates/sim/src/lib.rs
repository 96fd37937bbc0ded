//! Simulation of Slipstream nodes under lock-step, eventually lock-step and
//! slot-sleepy networks, with Byzantine strategies, payment clients and
//! property checkers over the resulting trace.

pub mod adversary;
pub mod bundled;
pub mod check;
pub mod engine;
pub mod net;
pub mod report;
pub mod scenario;
pub mod selftest;
pub mod stats;
pub mod trace;
pub mod workload;

use slipstream_core::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("bad trace: {0}")]
    Trace(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub use engine::run;
pub use scenario::Scenario;
pub use trace::RunTrace;
