//! Experiment runner: single designs, parameter sweeps and ensemble means,
//! written as CSV.

pub mod evaluate;
pub mod experiment;
pub mod output;

pub use experiment::{run_experiment, DesignKind, Experiment, ExperimentKind, Report};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] wpifc_core::Error),
    #[error(transparent)]
    Config(#[from] wpifc_core::ConfigError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
