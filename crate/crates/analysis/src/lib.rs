//! Closed-form quantities for non-stationary streaming PCA.
//!
//! Everything here is arithmetic on model parameters: the two-hypothesis
//! lower bound and its crossover horizon, the KL divergence between the
//! hypothesis paths, the block-noise bound and its optimal block size, and
//! the assumption checks that size the noisy power method.
//!
//! Nothing is clamped behind the caller's back: infeasible parameter
//! combinations show up as `None` / `false` entries in a [`BoundReport`].

mod assumptions;
mod kl;
mod lower;
mod noise;

pub use assumptions::{
    check_assumptions, instance_conditions, iterations_for, resolve_horizon, BoundInputs,
    BoundReport, InstanceConditions, Margins, DEFAULT_INIT_CONSTANT,
};
pub use kl::{gaussian_kl, kl_paths, kl_paths_gaussian, KlReport};
pub use lower::{hypothesis_angles, lower_bound_s, noise_ratio, HypothesisAngles, LowerBound};
pub use noise::{empirical_noise, implied_constant, noise_bound, NoiseBound};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Linalg(#[from] spca_linalg::LinalgError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(AnalysisError::InvalidParams(msg.into()))
}
