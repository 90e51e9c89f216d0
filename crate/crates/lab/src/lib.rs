//! Scenario runner, configuration and persistence for `fracdrift` experiments.

pub mod cache;
pub mod config;
pub mod error;
pub mod output;
pub mod runner;
pub mod scenarios;

pub use config::Scenario;
pub use error::{LabError, LabResult};
pub use runner::{run_scenario, RunOptions, RunOutcome};
