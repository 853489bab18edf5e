//! Reference estimators.

use spca_linalg::{svd, LinalgError, Matrix};

use crate::power::StreamObserver;
use crate::Result;

/// Top-k left singular subspace of a (covariance) matrix.
pub fn oracle_subspace(m: &Matrix, k: usize) -> Result<Matrix> {
    let lim = m.nrows().min(m.ncols());
    if k == 0 || k > lim {
        return Err(LinalgError::IndexOutOfRange { index: k, limit: lim }.into());
    }
    let dec = svd(m)?;
    Ok(dec.u.columns(0, k).into_owned())
}

/// Batch PCA on the most recent window of samples (`p × B`, one per column).
pub fn sliding_window_baseline(tail: &Matrix, k: usize) -> Result<Matrix> {
    if tail.ncols() == 0 {
        return Err(LinalgError::Empty.into());
    }
    // left singular vectors of X are those of X Xᵀ
    oracle_subspace(tail, k)
}

/// Observer accumulating `Σ x xᵀ` over samples with `t ≥ start`.
#[derive(Debug, Clone)]
pub struct WindowCovariance {
    pub start: usize,
    sum: Matrix,
    count: usize,
}

impl WindowCovariance {
    pub fn new(p: usize, start: usize) -> Self {
        WindowCovariance {
            start,
            sum: Matrix::zeros(p, p),
            count: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `(1/n) Σ x xᵀ`; only the lower triangle is accumulated.
    pub fn covariance(&self) -> Matrix {
        let p = self.sum.nrows();
        let inv = 1.0 / self.count.max(1) as f64;
        Matrix::from_fn(p, p, |i, j| {
            if i >= j {
                self.sum[(i, j)] * inv
            } else {
                self.sum[(j, i)] * inv
            }
        })
    }

    pub fn subspace(&self, k: usize) -> Result<Matrix> {
        if self.count == 0 {
            return Err(LinalgError::Empty.into());
        }
        oracle_subspace(&self.covariance(), k)
    }
}

impl StreamObserver for WindowCovariance {
    fn observe(&mut self, t: usize, x: &[f64]) {
        if t < self.start {
            return;
        }
        let p = self.sum.nrows();
        // symmetric rank-one update on the lower triangle, mirrored on read
        for j in 0..p {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let col = &mut self.sum.as_mut_slice()[j * p..(j + 1) * p];
            for i in j..p {
                col[i] += x[i] * xj;
            }
        }
        self.count += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_covariance_matches_dense() {
        let x = Matrix::from_fn(3, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let mut w = WindowCovariance::new(3, 2);
        for t in 0..6 {
            w.observe(t, x.column(t).as_slice());
        }
        let tail = x.columns(2, 4);
        let dense = &tail * tail.transpose() / 4.0;
        assert_eq!(w.count(), 4);
        assert!((w.covariance() - dense).abs().max() < 1e-14);
    }

    #[test]
    fn oracle_of_diagonal() {
        let m = spca_linalg::diag(&[1.0, 5.0, 3.0]);
        let u = oracle_subspace(&m, 2).unwrap();
        assert!((u[(1, 0)].abs() - 1.0).abs() < 1e-14);
        assert!((u[(2, 1)].abs() - 1.0).abs() < 1e-14);
        assert!(oracle_subspace(&m, 4).is_err());
    }
}
