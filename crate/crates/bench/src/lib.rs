//! Experiment harness for the rsoc solvers: registry, TOML configs, runs,
//! CSV/SVG artifacts and run comparison.

use std::path::PathBuf;

pub mod compare;
pub mod config;
pub mod experiments;
pub mod output;
pub mod runner;

pub use config::{ExperimentConfig, ModelConfig, SolverKind};
pub use experiments::{build, lookup, registry, Experiment, ExperimentKind, Setup};
pub use runner::{run_experiment, solve_config, ExperimentOutcome, RunOptions, RunOutcome};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("unknown experiment `{0}`; available: {1}")]
    UnknownExperiment(String, String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("{path}: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, #[source] std::io::Error),
    #[error("{path}: {msg}", path = .0.display(), msg = .1)]
    Csv(PathBuf, String),
    #[error("compare: {0}")]
    Compare(String),
}
