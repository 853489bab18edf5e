use crate::{invalid, Result};

/// `a = σ²(σ²+δ)/δ²`, the inverse signal-to-noise ratio that sets every scale.
pub fn noise_ratio(delta: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    s2 * (s2 + delta) / (delta * delta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBound {
    /// `(γ/δ)^{1/3} a^{1/3} + T^{-1/2} a^{1/2}`
    pub s: f64,
    /// Crossover horizon `(γ/δ)^{-2/3} a^{1/3}`; infinite for `γ = 0`.
    pub t_star: f64,
    /// `T → ∞` limit of `s`.
    pub plateau: f64,
    pub a: f64,
}

fn check_model(delta: f64, gamma: f64, sigma: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return invalid(format!("delta must be positive, got {delta}"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return invalid(format!("sigma must be nonnegative, got {sigma}"));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return invalid(format!("gamma must be nonnegative, got {gamma}"));
    }
    if gamma / delta >= 1.0 {
        return invalid(format!("gamma/delta must be < 1, got {}", gamma / delta));
    }
    Ok(())
}

/// Minimax lower bound `s` for horizon `T` (a real number ≥ 1).
pub fn lower_bound_s(delta: f64, gamma: f64, sigma: f64, t: f64) -> Result<LowerBound> {
    check_model(delta, gamma, sigma)?;
    if !(t >= 1.0) {
        return invalid(format!("T must be >= 1, got {t}"));
    }
    let a = noise_ratio(delta, sigma);
    let r = gamma / delta;
    let plateau = r.cbrt() * a.cbrt();
    let s = plateau + a.sqrt() / t.sqrt();
    let t_star = if gamma == 0.0 {
        f64::INFINITY
    } else {
        r.powf(-2.0 / 3.0) * a.cbrt()
    };
    Ok(LowerBound {
        s,
        t_star,
        plateau,
        a,
    })
}

/// Angle schedule of the alternative hypothesis,
/// `θ_t = max{0, asin(2s) − (T−t)·asin(γ/δ)}` for `t = 1..=T`.
#[derive(Debug, Clone)]
pub struct HypothesisAngles {
    /// `theta[t-1] = θ_t`
    pub theta: Vec<f64>,
    pub s: f64,
    /// `2s > 1`: the terminal angle was clamped to π/2.
    pub clamped: bool,
}

pub fn hypothesis_angles(delta: f64, gamma: f64, sigma: f64, t: usize) -> Result<HypothesisAngles> {
    if t == 0 {
        return invalid("T must be >= 1");
    }
    let lb = lower_bound_s(delta, gamma, sigma, t as f64)?;
    let clamped = 2.0 * lb.s > 1.0;
    let phi_t = if clamped {
        std::f64::consts::FRAC_PI_2
    } else {
        (2.0 * lb.s).asin()
    };
    let phi_g = (gamma / delta).asin();
    let theta = (1..=t)
        .map(|i| (phi_t - (t - i) as f64 * phi_g).max(0.0))
        .collect();
    Ok(HypothesisAngles {
        theta,
        s: lb.s,
        clamped,
    })
}
