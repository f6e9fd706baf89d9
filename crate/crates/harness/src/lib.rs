//! Configuration loading, presets, load sweeps and quality measures for
//! the `signal-delay` command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod sweep;
pub mod tables;

use signal_core::ModelError;
use signal_oracle::OracleError;
use signal_sim::SimError;
use thiserror::Error;

pub use config::{load_config, preset, preset_document, preset_names, ConfigDocument, LoadedConfig};
pub use sweep::{default_grid, quality, sweep, QualityReport, SweepOutcome, SweepRow, SweepSpec};
pub use tables::{analysis_csv, analyze, fluid_csv, oracle_csv, AnalysisRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("unknown preset or missing file: {0}")]
    UnknownConfig(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

fn model_code(e: &ModelError) -> i32 {
    match e {
        ModelError::UnstableLoad { .. } => 3,
        _ => 2,
    }
}

impl HarnessError {
    /// 2 for invalid input, 3 for an unstable load, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Parse { .. } | HarnessError::UnknownConfig(_) | HarnessError::Config(_) => 2,
            HarnessError::Model(e) => model_code(e),
            HarnessError::Sim(SimError::Unstable { .. }) => 3,
            HarnessError::Sim(SimError::Model(e)) => model_code(e),
            HarnessError::Sim(SimError::InvalidConfig(_)) => 2,
            HarnessError::Oracle(OracleError::Model(e)) => model_code(e),
            HarnessError::Oracle(OracleError::NoStationary(_) | OracleError::Solver(_)) => 1,
            HarnessError::Oracle(_) => 2,
            HarnessError::Io(_) => 1,
        }
    }
}
