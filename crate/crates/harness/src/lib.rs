//! Experiment driver for non-stationary streaming PCA: parameter sweeps over
//! the spiked model, the noisy power method against its baselines, noise
//! calibration and CSV output. The `streampca` binary wraps this crate.

pub mod calibrate;
pub mod spec;
pub mod stats;
pub mod sweep;

pub use calibrate::{fit_constant_c, noise_block, Calibration, CalibrationSpec, CellFit};
pub use stats::{loglog_slope, median, nearest_rank, quantile};
pub use spec::{BlockPolicy, Cell, GridPoint, Method, SweepSpec};
pub use sweep::{
    check_invariants, medians, run_cell_trial, run_sweep, trial_seed, CsvSink, SweepOutcome,
    TrialRecord, TrialRun, CSV_HEADER,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Linalg(#[from] spca_linalg::LinalgError),
    #[error(transparent)]
    Model(#[from] spca_model::ModelError),
    #[error(transparent)]
    Npm(#[from] spca_npm::NpmError),
    #[error(transparent)]
    Analysis(#[from] spca_analysis::AnalysisError),
    #[error(transparent)]
    Verify(#[from] spca_verify::VerifyError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
