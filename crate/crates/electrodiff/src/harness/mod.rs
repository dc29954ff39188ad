//! Experiment orchestration: configuration, λ-sweeps, manufactured-solution
//! verification, rate fitting, and file output.

pub mod config;
pub mod experiment;
pub mod mms;
pub mod output;
pub mod ratefit;

use std::path::PathBuf;

use crate::diagnostics::DiagnosticsError;
use crate::model::ModelError;
use crate::npns::NpnsError;
use crate::quasineutral::LimitError;

pub use config::{ConfigError, ExperimentConfig};
pub use experiment::{run_comparison, run_sweep, ComparisonResult, SweepResult, SweepSummary};
pub use mms::{run_mms, MmsReport, MmsStudy, MmsSystem};
pub use ratefit::{fit_power_law, RateFit};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Npns(#[from] NpnsError),
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("constructed initial data violates its integral constraints: {0}")]
    IncompatibleInitialData(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed snapshot file: {0}")]
    BadSnapshotFile(String),
}

impl HarnessError {
    /// Process exit code: 3 for configuration problems, 2 for anything that
    /// happens while solving or writing results.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }
}
