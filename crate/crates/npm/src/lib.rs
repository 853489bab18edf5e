//! Block noisy power method.
//!
//! For each block of `B` fresh observations the iterate is multiplied by the
//! block's empirical covariance and re-orthonormalised:
//!
//! ```text
//! S ← (1/B) Σ_t x_t (x_tᵀ Q)      (p × k, streamed per sample)
//! Q ← b(S)
//! ```
//!
//! The `p × p` covariance is never formed in the update path. Baselines
//! (top-k of the true covariance, batch SVD of the last window) live in
//! [`baseline`].

pub mod baseline;
mod power;

pub use baseline::{oracle_subspace, sliding_window_baseline, WindowCovariance};
pub use power::{
    accumulate_block, block_update, dense_block_product, init_iterate, run_npm,
    run_npm_observed, BlockAccumulator, NpmConfig, NpmRun, NpmState, NullObserver, ReinitEvent,
    StreamObserver,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NpmError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Linalg(#[from] spca_linalg::LinalgError),
    #[error(transparent)]
    Model(#[from] spca_model::ModelError),
}

pub type Result<T> = std::result::Result<T, NpmError>;
