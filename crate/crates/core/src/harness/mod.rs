//! Experiment orchestration: configuration, runs, reports and sweeps.

pub mod config;
pub mod fit;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, Family};
pub use report::{RunSummary, RunVerdict};
pub use run::run;
