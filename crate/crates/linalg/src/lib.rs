//! Dense linear algebra for the streaming-PCA workspace.
//!
//! Everything here is a thin, deterministic layer over `nalgebra`:
//! SVD with sorted values and a fixed sign convention, QR-based
//! orthonormal bases, and the subspace distance
//! `d(M, N) = ‖b(M)ᵀ N_⊥‖₂` that every error in the workspace is measured in.
//!
//! All functions are pure; matrices are `DMatrix<f64>`.

use nalgebra::{Cholesky, DMatrix, DVector, QR, SVD};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative factor of the numerical-rank threshold,
/// `s_min ≤ RANK_RTOL · s_max · max(rows, cols)` ⇒ deficient.
pub const RANK_RTOL: f64 = 1e-10;

const SVD_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("rank deficient: s_min = {smallest:e} <= tolerance {tolerance:e}")]
    RankDeficient { smallest: f64, tolerance: f64 },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },
    #[error("SVD kernel failed to converge")]
    ConvergenceFailure,
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix has no columns or no rows")]
    Empty,
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Thin SVD `M = U diag(d) Vᵀ` with `d` nonincreasing.
///
/// `U` is `rows × r`, `V` is `cols × r` with `r = min(rows, cols)`.
/// Each left singular vector has its largest-magnitude entry positive.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub d: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn s(&self, i: usize) -> f64 {
        self.d.get(i).copied().unwrap_or(0.0)
    }

    pub fn s_max(&self) -> f64 {
        self.s(0)
    }

    pub fn recompose(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, s) in self.d.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }

    /// Number of singular values above the shared rank tolerance.
    pub fn rank(&self, rows: usize, cols: usize) -> usize {
        let tol = rank_tolerance(self.s_max(), rows, cols);
        self.d.iter().filter(|&&s| s > tol).count()
    }
}

pub fn rank_tolerance(s_max: f64, rows: usize, cols: usize) -> f64 {
    RANK_RTOL * s_max * rows.max(cols) as f64
}

pub fn ensure_finite(m: &Matrix) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

fn ensure_nonempty(m: &Matrix) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        Err(LinalgError::Empty)
    } else {
        Ok(())
    }
}

// nalgebra's implicit-shift iteration can stop on a wrong factorisation when
// its tolerance sits at machine epsilon (seen on rank-deficient PSD inputs),
// and on some small matrices with clustered values it stalls at a residual far
// above round-off. Every result is checked by residual, retried with a looser
// tolerance, and finally handed to one-sided Jacobi.
const SVD_EPS_LADDER: [f64; 4] = [4.0 * f64::EPSILON, 64.0 * f64::EPSILON, 1e-12, 1e-10];
const JACOBI_MAX_SWEEPS: usize = 60;

/// Unordered thin factors `(U, d, Vᵀ)`.
type RawSvd = (Matrix, DVector<f64>, Matrix);

fn checked_svd(m: &Matrix) -> Result<RawSvd> {
    let scale = m.amax();
    let n = m.nrows().max(m.ncols()) as f64;
    // honest residuals sit near 1e-15‖M‖
    let tol = 1e-12 * n * scale.max(f64::MIN_POSITIVE);
    let residual = |(u, d, vt): &RawSvd| (u * Matrix::from_diagonal(d) * vt - m).amax();
    for eps in SVD_EPS_LADDER {
        let Some(raw) = SVD::try_new_unordered(m.clone(), true, true, eps, SVD_MAX_ITER) else {
            continue;
        };
        let f = (raw.u.unwrap(), raw.singular_values, raw.v_t.unwrap());
        if residual(&f) <= tol {
            return Ok(f);
        }
    }
    let f = jacobi_svd(m).ok_or(LinalgError::ConvergenceFailure)?;
    if residual(&f) <= tol {
        Ok(f)
    } else {
        Err(LinalgError::ConvergenceFailure)
    }
}

/// One-sided (Hestenes) Jacobi on the tall orientation of `m`.
fn jacobi_svd(m: &Matrix) -> Option<RawSvd> {
    if m.nrows() < m.ncols() {
        let (u, d, vt) = jacobi_svd(&m.transpose())?;
        return Some((vt.transpose(), d, u.transpose()));
    }
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let mut v = Matrix::identity(cols, cols);
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut a, &mut v] {
                    for i in 0..mat.nrows() {
                        let (x, y) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = c * x - s * y;
                        mat[(i, q)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }
    let d = DVector::from_iterator(cols, (0..cols).map(|j| a.column(j).norm()));
    let top = d.max();
    // columns that collapsed to zero get an orthonormal completion
    let mut u = Matrix::zeros(rows, cols);
    let mut live = Vec::new();
    for j in 0..cols {
        if d[j] > top * f64::EPSILON * rows as f64 && d[j] > 0.0 {
            u.set_column(j, &(a.column(j) / d[j]));
            live.push(j);
        }
    }
    if live.len() < cols {
        let mut basis: Vec<DVector<f64>> = live.iter().map(|&j| u.column(j).into_owned()).collect();
        let mut e = 0;
        for j in (0..cols).filter(|j| !live.contains(j)) {
            loop {
                let mut w = DVector::zeros(rows);
                w[e % rows] = 1.0;
                e += 1;
                for _ in 0..2 {
                    for b in &basis {
                        w -= b * b.dot(&w);
                    }
                }
                let nw = w.norm();
                if nw > 0.5 {
                    w /= nw;
                    u.set_column(j, &w);
                    basis.push(w);
                    break;
                }
            }
        }
    }
    Some((u, d, v.transpose()))
}

/// Sorted, sign-normalised thin SVD.
pub fn svd(m: &Matrix) -> Result<Svd> {
    ensure_nonempty(m)?;
    ensure_finite(m)?;
    let (u0, vals, vt0) = checked_svd(m)?;

    let r = vals.len();
    let mut order: Vec<usize> = (0..r).collect();
    // stable sort keeps the kernel's order for exact ties
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));

    let mut u = Matrix::zeros(m.nrows(), r);
    let mut v = Matrix::zeros(m.ncols(), r);
    let mut d = Vec::with_capacity(r);
    for (j, &src) in order.iter().enumerate() {
        let mut uc = u0.column(src).into_owned();
        let mut vc = vt0.row(src).transpose();
        let pivot = uc.iamax();
        if uc[pivot] < 0.0 {
            uc.neg_mut();
            vc.neg_mut();
        }
        u.set_column(j, &uc);
        v.set_column(j, &vc);
        d.push(vals[src].max(0.0));
    }
    Ok(Svd { u, d, v })
}

/// Singular values only, nonincreasing.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    ensure_nonempty(m)?;
    ensure_finite(m)?;
    let (_, vals, _) = checked_svd(m)?;
    let mut d: Vec<f64> = vals.iter().map(|s| s.max(0.0)).collect();
    d.sort_by(|a, b| b.total_cmp(a));
    Ok(d)
}

/// Spectral norm `‖M‖₂ = s₁(M)`.
pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0.0);
    }
    Ok(singular_values(m)?[0])
}

/// `s_i(M)` with 1-based `i`; zero past the end (the thin SVD pads with zeros).
pub fn singular_value(m: &Matrix, i: usize) -> Result<f64> {
    if i == 0 {
        return Err(LinalgError::IndexOutOfRange { index: 0, limit: 0 });
    }
    Ok(singular_values(m)?.get(i - 1).copied().unwrap_or(0.0))
}

/// Fails with `RankDeficient` unless `m` has full column rank.
pub fn check_full_column_rank(m: &Matrix) -> Result<()> {
    let d = singular_values(m)?;
    let tol = rank_tolerance(d[0], m.nrows(), m.ncols());
    let smallest = if m.ncols() > m.nrows() {
        0.0
    } else {
        *d.last().unwrap()
    };
    if smallest <= tol {
        Err(LinalgError::RankDeficient {
            smallest,
            tolerance: tol,
        })
    } else {
        Ok(())
    }
}

/// Householder QR factor `Q` (columns orthonormal, `diag(R) ≥ 0`) without a rank check.
pub fn qr_q(m: &Matrix) -> Matrix {
    let qr = QR::new(m.clone());
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols().min(r.nrows()) {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `b(M)`: an orthonormal basis of `span(M)` from a Householder QR.
pub fn orthonormal_basis(m: &Matrix) -> Result<Matrix> {
    ensure_nonempty(m)?;
    if m.nrows() < m.ncols() {
        return Err(LinalgError::ShapeMismatch {
            left: m.shape(),
            right: (m.ncols(), m.ncols()),
        });
    }
    check_full_column_rank(m)?;
    Ok(qr_q(m))
}

/// Orthonormal basis of the orthogonal complement of `span(q)`, `q` orthonormal `p × k`.
/// Returns `p × (p − k)`.
pub fn complement_basis(q: &Matrix) -> Result<Matrix> {
    let p = q.nrows();
    let k = q.ncols();
    if k >= p {
        return Ok(Matrix::zeros(p, 0));
    }
    let proj = Matrix::identity(p, p) - q * q.transpose();
    let s = svd(&proj)?;
    Ok(s.u.columns(0, p - k).into_owned())
}

fn same_shape(m: &Matrix, n: &Matrix) -> Result<()> {
    if m.shape() != n.shape() {
        Err(LinalgError::ShapeMismatch {
            left: m.shape(),
            right: n.shape(),
        })
    } else {
        Ok(())
    }
}

/// `d(Q_M, Q_N) = ‖(I − Q_N Q_Nᵀ) Q_M‖₂` for orthonormal inputs (no rank check).
pub fn distance_orthonormal(qm: &Matrix, qn: &Matrix) -> Result<f64> {
    let resid = qm - qn * (qn.transpose() * qm);
    Ok(spectral_norm(&resid)?.min(1.0))
}

/// Projection distance `d(M, N) = ‖b(M)ᵀ N_⊥‖₂`, the sine of the largest principal angle.
///
/// `N_⊥` is applied as `I − Q_N Q_Nᵀ`, never through `(NᵀN)⁻¹`.
pub fn projection_distance(m: &Matrix, n: &Matrix) -> Result<f64> {
    same_shape(m, n)?;
    let qm = orthonormal_basis(m)?;
    let qn = orthonormal_basis(n)?;
    distance_orthonormal(&qm, &qn)
}

/// `‖P_M − P_N‖₂` with explicit projectors; cross-check for [`projection_distance`].
pub fn projector_distance(m: &Matrix, n: &Matrix) -> Result<f64> {
    same_shape(m, n)?;
    let qm = orthonormal_basis(m)?;
    let qn = orthonormal_basis(n)?;
    let diff = &qm * qm.transpose() - &qn * qn.transpose();
    spectral_norm(&diff)
}

/// `δ(M) = s_k(M) − s_{k+1}(M)` with 1-based `k`.
pub fn spectral_gap(m: &Matrix, k: usize) -> Result<f64> {
    let limit = m.nrows().min(m.ncols());
    if k == 0 || k >= limit {
        return Err(LinalgError::IndexOutOfRange { index: k, limit });
    }
    let d = singular_values(m)?;
    Ok((d[k - 1] - d[k]).max(0.0))
}

/// `‖AAᵀ − BBᵀ‖₂` without forming `p × p` matrices.
///
/// With `[A B] = QR`, the difference is `Q (R_A R_Aᵀ − R_B R_Bᵀ) Qᵀ`.
pub fn gram_difference_norm(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(LinalgError::ShapeMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    if a == b {
        return Ok(0.0);
    }
    let p = a.nrows();
    let (ka, kb) = (a.ncols(), b.ncols());
    if ka + kb >= p {
        let diff = a * a.transpose() - b * b.transpose();
        return spectral_norm(&diff);
    }
    let mut stacked = Matrix::zeros(p, ka + kb);
    stacked.columns_mut(0, ka).copy_from(a);
    stacked.columns_mut(ka, kb).copy_from(b);
    let r = QR::new(stacked).r();
    let ra = r.columns(0, ka);
    let rb = r.columns(ka, kb);
    let small = &ra * ra.transpose() - &rb * rb.transpose();
    spectral_norm(&small)
}

/// Largest deviation of `QᵀQ` from the identity, in spectral norm.
pub fn orthonormality_defect(q: &Matrix) -> f64 {
    let g = q.transpose() * q - Matrix::identity(q.ncols(), q.ncols());
    spectral_norm(&g).unwrap_or(f64::INFINITY)
}

fn cholesky(m: &Matrix) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::ShapeMismatch {
            left: m.shape(),
            right: (m.ncols(), m.nrows()),
        });
    }
    ensure_finite(m)?;
    Cholesky::new(m.clone()).ok_or(LinalgError::NotPositiveDefinite)
}

/// `log det(M)` for symmetric positive definite `M`.
pub fn spd_log_det(m: &Matrix) -> Result<f64> {
    let c = cholesky(m)?;
    Ok(2.0 * c.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

/// Solves `M X = R` for symmetric positive definite `M`.
pub fn spd_solve(m: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    Ok(cholesky(m)?.solve(rhs))
}

/// Build a matrix from row slices (handy in tests and small examples).
pub fn from_rows(rows: &[&[f64]]) -> Matrix {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    Matrix::from_fn(r, c, |i, j| rows[i][j])
}

pub fn diag(values: &[f64]) -> Matrix {
    Matrix::from_diagonal(&Vector::from_row_slice(values))
}
