//! Discrete-event simulator for switched multi-node QKD networks.
//!
//! A scenario ([`topology::Scenario`]) describes nodes, fiber links, switching
//! policies, maintenance windows and key consumers. [`simcore::run`] executes
//! it and returns a [`simcore::RunResult`]; [`metrics::aggregate`] turns that
//! into block-time histograms, daily rates, QBER series, hourly statistics and
//! switching traces.

mod error;
pub mod kms;
pub mod linkmodel;
pub mod metrics;
pub mod orchestration;
pub mod simcore;
pub mod topology;

pub use error::{ExportError, KmsError, QberDomainError, ScenarioError};
pub use metrics::{aggregate, Aggregates};
pub use linkmodel::{binary_entropy, secret_fraction, BlockRecord};
pub use orchestration::{SwitchCause, SwitchEvent, SwitchPolicy};
pub use simcore::{run, run_with, RunOptions, RunResult, SimTime};
pub use topology::{parse_scenario, venqci_preset, LinkId, NodeId, Scenario};
