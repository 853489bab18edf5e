//! Observation models for streaming PCA.
//!
//! * stationary spiked model `x = A z + w`, `z ∼ 𝒩(0, I_k)`, `w ∼ 𝒩(0, σ² I_p)`;
//! * the drifting variant where `A_t` rotates with `‖A_tA_tᵀ − A_{t−1}A_{t−1}ᵀ‖₂ ≤ γ`;
//! * the two-hypothesis construction behind the minimax lower bound.
//!
//! Randomness comes from [`rng::stream`], keyed by `(seed, purpose, index)`.

pub mod hypothesis;
pub mod io;
pub mod path;
pub mod rng;
pub mod sample;

pub use hypothesis::{hypothesis_pair, HypothesisPair};
pub use path::{
    drift_check, generate_rotating_path, min_spike, PathCursor, PathSource, RotatingPath,
    StationaryPath, SubspacePath,
};
pub use sample::{covariance, sample_block, Sampler};

use spca_linalg::LinalgError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("construction check failed: {0}")]
    ConstructionCheck(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Analysis(#[from] spca_analysis::AnalysisError),
    #[error("path file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Parameters of the (non-)stationary spiked model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikedParams {
    pub p: usize,
    pub k: usize,
    /// Spike energy: `s_k(A_tA_tᵀ) ≥ δ`.
    pub delta: f64,
    pub sigma: f64,
    /// Per-step drift bound.
    pub gamma: f64,
    pub seed: u64,
}

impl SpikedParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::InvalidParams(m));
        if self.k == 0 || self.k >= self.p {
            return bad(format!("need 1 <= k < p, got k={} p={}", self.k, self.p));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be nonnegative, got {}", self.sigma));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0,1), got {}", self.gamma));
        }
        if self.gamma > 0.0 && self.gamma / self.delta >= 1.0 {
            return bad(format!(
                "gamma/delta must be < 1, got {}",
                self.gamma / self.delta
            ));
        }
        Ok(())
    }
}
