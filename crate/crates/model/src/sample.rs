use rand::Rng;
use rand_distr::StandardNormal;
use spca_linalg::Matrix;

use crate::{ModelError, Result};

/// `AAᵀ + σ²I`.
pub fn covariance(a: &Matrix, sigma: f64) -> Matrix {
    let p = a.nrows();
    a * a.transpose() + Matrix::identity(p, p) * (sigma * sigma)
}

/// Draws single observations `x = A z + w` into caller-owned buffers.
///
/// Per sample the generator is consumed as `z₁..z_k` then `w₁..w_p`
/// (the `w` draws are skipped when σ = 0).
#[derive(Debug, Clone)]
pub struct Sampler {
    sigma: f64,
    z: Vec<f64>,
}

impl Sampler {
    pub fn new(k: usize, sigma: f64) -> Self {
        Sampler {
            sigma,
            z: vec![0.0; k],
        }
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&mut self, a: &Matrix, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(a.ncols(), self.z.len());
        debug_assert_eq!(a.nrows(), out.len());
        for z in self.z.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        if self.sigma == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
        } else {
            for o in out.iter_mut() {
                *o = self.sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let p = out.len();
        let data = a.as_slice();
        for (j, &zj) in self.z.iter().enumerate() {
            let col = &data[j * p..(j + 1) * p];
            for (o, &aij) in out.iter_mut().zip(col) {
                *o += aij * zj;
            }
        }
    }
}

/// `p × B` block whose column `t` is `A_t z_t + w_t`.
///
/// `segment` holds either `B` factors or a single factor reused for all columns.
pub fn sample_block<R: Rng + ?Sized>(
    segment: &[Matrix],
    sigma: f64,
    b: usize,
    rng: &mut R,
) -> Result<Matrix> {
    let first = segment
        .first()
        .ok_or_else(|| ModelError::ShapeMismatch("empty path segment".into()))?;
    if segment.len() != b && segment.len() != 1 {
        return Err(ModelError::ShapeMismatch(format!(
            "segment length {} must be B = {b} or 1",
            segment.len()
        )));
    }
    if segment.iter().any(|a| a.shape() != first.shape()) {
        return Err(ModelError::ShapeMismatch("factors differ in shape".into()));
    }
    let (p, k) = first.shape();
    let mut sampler = Sampler::new(k, sigma);
    let mut out = Matrix::zeros(p, b);
    for t in 0..b {
        let a = if segment.len() == 1 { first } else { &segment[t] };
        let mut col = out.column_mut(t);
        sampler.draw(a, rng, col.as_mut_slice());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use spca_linalg::spectral_norm;

    #[test]
    fn noiseless_samples_lie_on_the_span() {
        let mut a = Matrix::zeros(4, 1);
        a[(0, 0)] = 1.0;
        let mut rng = stream(1, Purpose::Sample, 0);
        let x = sample_block(&[a], 0.0, 50, &mut rng).unwrap();
        assert!(x.rows(1, 3).iter().all(|&v| v == 0.0));
        assert!(x.row(0).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn isotropic_covariance_concentrates() {
        let p = 10;
        let a = Matrix::zeros(p, 1);
        let mut rng = stream(2, Purpose::Sample, 0);
        let n = 100_000;
        let x = sample_block(&[a], 1.0, n, &mut rng).unwrap();
        let c = &x * x.transpose() / n as f64;
        let err = spectral_norm(&(c - Matrix::identity(p, p))).unwrap();
        assert!(err <= 0.05, "‖Ĉ − I‖ = {err}");
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let a = Matrix::from_fn(5, 2, |i, j| (i + 2 * j) as f64 * 0.1);
        let x = sample_block(&[a.clone()], 0.5, 30, &mut stream(9, Purpose::Sample, 4)).unwrap();
        let y = sample_block(&[a], 0.5, 30, &mut stream(9, Purpose::Sample, 4)).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn time_varying_segment_uses_each_factor() {
        let mut a0 = Matrix::zeros(3, 1);
        a0[(0, 0)] = 1.0;
        let mut a1 = Matrix::zeros(3, 1);
        a1[(2, 0)] = 1.0;
        let x = sample_block(&[a0, a1], 0.0, 2, &mut stream(3, Purpose::Sample, 0)).unwrap();
        assert!(x[(2, 0)] == 0.0 && x[(0, 1)] == 0.0);
        assert!(x[(0, 0)] != 0.0 && x[(2, 1)] != 0.0);
    }

    #[test]
    fn segment_length_is_checked() {
        let a = Matrix::zeros(3, 1);
        let r = sample_block(&[a.clone(), a.clone()], 1.0, 3, &mut stream(0, Purpose::Sample, 0));
        assert!(matches!(r, Err(ModelError::ShapeMismatch(_))));
    }
}
