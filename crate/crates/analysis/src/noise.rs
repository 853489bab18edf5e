use spca_linalg::{spectral_norm, LinalgError, Matrix};

use crate::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBound {
    /// `√(C p log T / B) + Bγ/2`
    pub value: f64,
    /// Minimiser `B* = (C p log T / γ²)^{1/3}`; infinite for `γ = 0`.
    pub b_star: f64,
    /// Value at `B*`, `(3/2)(C p log T · γ)^{1/3}`.
    pub min_value: f64,
}

/// Spectral-norm bound on the per-block noise `E(l)`; `log` is natural.
pub fn noise_bound(p: usize, t: f64, b: f64, gamma: f64, c: f64) -> Result<NoiseBound> {
    if p == 0 {
        return invalid("p must be positive");
    }
    if !(t >= 2.0) {
        return invalid(format!("T must be >= 2, got {t}"));
    }
    if !(b >= 1.0) {
        return invalid(format!("B must be >= 1, got {b}"));
    }
    if !(gamma >= 0.0) || !(c >= 0.0) {
        return invalid("gamma and C must be nonnegative");
    }
    let cpl = c * p as f64 * t.ln();
    let value = (cpl / b).sqrt() + b * gamma / 2.0;
    let (b_star, min_value) = if gamma == 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        ((cpl / (gamma * gamma)).cbrt(), 1.5 * (cpl * gamma).cbrt())
    };
    Ok(NoiseBound {
        value,
        b_star,
        min_value,
    })
}

/// Smallest `C` for which `norm ≤ √(C p log T/B) + Bγ/2`; `None` for degenerate inputs.
pub fn implied_constant(norm: f64, p: usize, t: f64, b: f64, gamma: f64) -> Option<f64> {
    let denom = p as f64 * t.ln();
    if !(denom > 0.0) || !(b > 0.0) || !norm.is_finite() {
        return None;
    }
    let stat = (norm - b * gamma / 2.0).max(0.0);
    Some(stat * stat * b / denom)
}

/// `‖(1/B) Σ x_t x_tᵀ − M_true‖₂` for the columns `x_t` of `block`.
pub fn empirical_noise(block: &Matrix, m_true: &Matrix) -> Result<f64> {
    let p = block.nrows();
    if m_true.shape() != (p, p) {
        return Err(LinalgError::ShapeMismatch {
            left: block.shape(),
            right: m_true.shape(),
        }
        .into());
    }
    if block.ncols() == 0 {
        return invalid("empty block");
    }
    let emp = block * block.transpose() / block.ncols() as f64;
    Ok(spectral_norm(&(emp - m_true))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_example() {
        let nb = noise_bound(4, std::f64::consts::E, 4.0, 0.0, 1.0).unwrap();
        assert!((nb.value - 1.0).abs() < 1e-15);
        assert!(nb.b_star.is_infinite());
    }

    #[test]
    fn minimum_at_b_star() {
        let (p, t, g, c) = (20, 1e6, 1e-5, 1.3);
        let nb = noise_bound(p, t, 10.0, g, c).unwrap();
        let at = noise_bound(p, t, nb.b_star, g, c).unwrap();
        assert!((at.value - nb.min_value).abs() < 1e-12 * nb.min_value);
        for f in [0.9, 1.1] {
            assert!(noise_bound(p, t, nb.b_star * f, g, c).unwrap().value > at.value);
        }
    }

    #[test]
    fn grows_linearly_past_optimum() {
        let base = noise_bound(10, 1e4, 1e6, 1e-3, 1.0).unwrap().value;
        let twice = noise_bound(10, 1e4, 2e6, 1e-3, 1.0).unwrap().value;
        assert!(twice > 1.9 * base);
    }

    #[test]
    fn implied_constant_inverts_bound() {
        let (p, t, b, g, c) = (7, 1e5, 300.0, 1e-4, 2.2);
        let v = noise_bound(p, t, b, g, c).unwrap().value;
        assert!((implied_constant(v, p, t, b, g).unwrap() - c).abs() < 1e-12);
    }

    #[test]
    fn repeated_vector_has_no_noise() {
        let v = Matrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let block = Matrix::from_fn(3, 10, |i, _| v[(i, 0)]);
        assert!(empirical_noise(&block, &(&v * v.transpose())).unwrap() < 1e-14);
    }
}
