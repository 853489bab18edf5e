use spca_linalg::{projection_distance, spd_log_det, spd_solve, LinalgError, Matrix};

use crate::{invalid, Result};

/// Per-step and total divergence between two hypothesis paths.
///
/// Convention: the closed form `δ²/(σ²(σ²+δ)) Σ sin²θ_t` equals
/// `Σ_t [tr(Σ₁⁻¹Σ₀) − p + log det Σ₁/det Σ₀]`, which is **twice** the
/// Gaussian KL divergence. [`kl_paths_gaussian`] returns that un-halved
/// quantity so the two can be compared term by term.
#[derive(Debug, Clone)]
pub struct KlReport {
    pub total: f64,
    pub per_step: Vec<f64>,
}

fn check_pair(h0: &[Matrix], h1: &[Matrix], sigma: f64) -> Result<()> {
    if h0.len() != h1.len() {
        return invalid(format!("path lengths differ: {} vs {}", h0.len(), h1.len()));
    }
    if h0.is_empty() {
        return invalid("empty paths");
    }
    if !(sigma > 0.0) {
        return invalid("sigma must be positive for a finite divergence");
    }
    Ok(())
}

/// Closed form `δ²/(σ²(σ²+δ)) Σ_t sin²θ_t`, with `sin θ_t = d(A_t⁽⁰⁾, A_t⁽¹⁾)`.
pub fn kl_paths(h0: &[Matrix], h1: &[Matrix], sigma: f64, delta: f64) -> Result<KlReport> {
    check_pair(h0, h1, sigma)?;
    if !(delta > 0.0) {
        return invalid("delta must be positive");
    }
    let s2 = sigma * sigma;
    let scale = delta * delta / (s2 * (s2 + delta));
    let per_step = h0
        .iter()
        .zip(h1)
        .map(|(a, b)| {
            let d = projection_distance(a, b)?;
            Ok(scale * d * d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KlReport {
        total: per_step.iter().sum(),
        per_step,
    })
}

/// `KL(𝒩(0,Σ₀) ‖ 𝒩(0,Σ₁)) = ½[tr(Σ₁⁻¹Σ₀) − p + log det Σ₁ − log det Σ₀]`.
pub fn gaussian_kl(cov0: &Matrix, cov1: &Matrix) -> Result<f64> {
    if cov0.shape() != cov1.shape() {
        return Err(LinalgError::ShapeMismatch {
            left: cov0.shape(),
            right: cov1.shape(),
        }
        .into());
    }
    let p = cov0.nrows() as f64;
    let tr = spd_solve(cov1, cov0)?.trace();
    let ld = spd_log_det(cov1)? - spd_log_det(cov0)?;
    Ok(0.5 * (tr - p + ld))
}

fn covariance(a: &Matrix, s2: f64) -> Matrix {
    let p = a.nrows();
    a * a.transpose() + Matrix::identity(p, p) * s2
}

/// Generic-Gaussian oracle for [`kl_paths`]: per-step `2·KL(ℙ_t ‖ ℚ_t)`.
pub fn kl_paths_gaussian(h0: &[Matrix], h1: &[Matrix], sigma: f64) -> Result<KlReport> {
    check_pair(h0, h1, sigma)?;
    let s2 = sigma * sigma;
    let per_step = h0
        .iter()
        .zip(h1)
        .map(|(a, b)| Ok(2.0 * gaussian_kl(&covariance(a, s2), &covariance(b, s2))?))
        .collect::<Result<Vec<_>>>()?;
    Ok(KlReport {
        total: per_step.iter().sum(),
        per_step,
    })
}
