//! Experiment harness for the adapair optimizer: multi-seed AUC runs,
//! timing comparisons, gradient-variance tables and stability probes, all
//! written as CSV.

pub mod commands;
pub mod config;
pub mod experiment;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad flags, config file or missing inputs; exit code 1.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] adapair::Error),

    #[error("{0}")]
    Runtime(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) => 1,
            _ => 2,
        }
    }
}
