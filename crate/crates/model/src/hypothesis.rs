//! The two sequences behind the minimax lower bound.
//!
//! `𝓗₀`: `A_t = √δ [I_k; 0]` for every t.
//! `𝓗₁`: same, except the last column is `√δ (cos θ_t e_k + sin θ_t e_{k+1})`
//! with `θ_t = max{0, asin(2s) − (T−t) asin(γ/δ)}`.

use spca_analysis::hypothesis_angles;
use spca_linalg::{gram_difference_norm, Matrix};

use crate::path::{drift_check, min_spike, DRIFT_SLACK};
use crate::{ModelError, Result, SubspacePath};

#[derive(Debug, Clone)]
pub struct HypothesisPair {
    pub h0: SubspacePath,
    pub h1: SubspacePath,
    /// `theta[t-1] = θ_t`
    pub theta: Vec<f64>,
    pub s: f64,
    /// `2s > 1`, terminal angle clamped to π/2.
    pub clamped: bool,
    /// `max_t ‖A_t⁽¹⁾A_t⁽¹⁾ᵀ − A_t⁽⁰⁾A_t⁽⁰⁾ᵀ‖₂ − δ|sin θ_t|` (≤ 1e-10 when verified)
    pub cross_gap_excess: f64,
}

fn planted(p: usize, k: usize, delta: f64, theta: f64) -> Matrix {
    let r = delta.sqrt();
    let mut a = Matrix::zeros(p, k);
    for j in 0..k - 1 {
        a[(j, j)] = r;
    }
    a[(k - 1, k - 1)] = r * theta.cos();
    a[(k, k - 1)] = r * theta.sin();
    a
}

/// Builds both hypothesis paths and verifies membership, drift and the
/// cross-hypothesis gap before returning.
///
/// Needs `p ≥ k + 1` (the last column rotates into coordinate `k + 1`).
pub fn hypothesis_pair(
    p: usize,
    k: usize,
    delta: f64,
    gamma: f64,
    sigma: f64,
    t: usize,
) -> Result<HypothesisPair> {
    if k == 0 || k >= p {
        return Err(ModelError::InvalidParams(format!(
            "need 1 <= k < p, got k={k} p={p}"
        )));
    }
    let angles = hypothesis_angles(delta, gamma, sigma, t)?;
    let a0 = planted(p, k, delta, 0.0);
    let h0 = SubspacePath {
        factors: vec![a0.clone(); t],
        gamma_certified: 0.0,
    };
    let f1: Vec<Matrix> = angles
        .theta
        .iter()
        .map(|&th| planted(p, k, delta, th))
        .collect();
    let h1 = SubspacePath::new(f1)?;

    let fail = |m: String| Err(ModelError::ConstructionCheck(m));
    for (name, path) in [("H0", &h0), ("H1", &h1)] {
        let lo = min_spike(path)?;
        if lo < delta - DRIFT_SLACK {
            return fail(format!("{name}: s_k(AAᵀ) = {lo} < delta"));
        }
    }
    if drift_check(&h0)? > DRIFT_SLACK {
        return fail("H0 is not constant".into());
    }
    if h1.gamma_certified > gamma + DRIFT_SLACK {
        return fail(format!(
            "H1 drift {:e} exceeds gamma {gamma:e}",
            h1.gamma_certified
        ));
    }
    for (i, w) in h1.factors.windows(2).enumerate() {
        let d = gram_difference_norm(&w[1], &w[0])?;
        let step = delta * (angles.theta[i + 1] - angles.theta[i]).sin().abs();
        if d > step + DRIFT_SLACK {
            return fail(format!("H1 step {i}: drift {d} > delta|sin dtheta| = {step}"));
        }
    }
    let mut excess = f64::NEG_INFINITY;
    for (t_idx, (b, &th)) in h1.factors.iter().zip(&angles.theta).enumerate() {
        let gap = gram_difference_norm(b, &a0)?;
        let e = gap - delta * th.sin().abs();
        if e > DRIFT_SLACK {
            return fail(format!("cross gap at t={} exceeds delta|sin theta|", t_idx + 1));
        }
        excess = excess.max(e);
    }

    Ok(HypothesisPair {
        h0,
        h1,
        theta: angles.theta,
        s: angles.s,
        clamped: angles.clamped,
        cross_gap_excess: excess,
    })
}
