//! Single-instance verifiers. Each returns the computed sides of the
//! inequality; the caller decides about slack.

use serde::Serialize;
use spca_analysis::instance_conditions;
use spca_linalg::{
    orthonormal_basis, orthonormality_defect, projection_distance, rank_tolerance, singular_value,
    singular_values, spectral_norm, svd, Matrix, Svd, Vector,
};

use crate::{Result, VerifyError};

fn hypothesis<T>(msg: impl Into<String>) -> Result<T> {
    Err(VerifyError::HypothesisUnsatisfied(msg.into()))
}

fn ensure_symmetric(m: &Matrix, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(VerifyError::InvalidParams(format!("{what} must be square")));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * m.amax().max(1.0) {
        return Err(VerifyError::InvalidParams(format!(
            "{what} is not symmetric (asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues nonincreasing.
///
/// Shifting by `‖A‖₂` makes the matrix PSD so the sorted SVD coincides with
/// the eigen-decomposition.
fn sym_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = a.nrows();
    let c = spectral_norm(a)?;
    let shifted = a + Matrix::identity(n, n) * c;
    let Svd { u, d, .. } = svd(&shifted)?;
    Ok((d.iter().map(|x| x - c).collect(), u))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Outcome {
    pub lhs: f64,
    pub rhs: f64,
}

impl Outcome {
    /// `rhs − lhs`; negative means the claimed `lhs ≤ rhs` failed.
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// `d(U₁:k, MN) ≤ (s_{k+1}(M)/s_k(M)) · s₁(V_{k+1:n}ᵀN)/s_k(V₁:kᵀN)`, `k = N.ncols()`.
pub fn verify_pm_stat(m: &Matrix, n: &Matrix) -> Result<Outcome> {
    let (rows, cols) = m.shape();
    let k = n.ncols();
    if n.nrows() != cols || !(rows >= cols && cols >= k && k >= 1) {
        return Err(VerifyError::InvalidParams(format!(
            "need m >= n >= k >= 1, got M {rows}x{cols}, N {}x{k}",
            n.nrows()
        )));
    }
    let dec = svd(m)?;
    let sk = dec.d[k - 1];
    if sk <= rank_tolerance(dec.s_max(), rows, cols) {
        return Err(VerifyError::PreconditionViolated("s_k(M) = 0".into()));
    }
    let g = dec.v.columns(0, k).transpose() * n;
    let sk_g = singular_value(&g, k)?;
    if sk_g <= rank_tolerance(spectral_norm(n)?, k, k) {
        return Err(VerifyError::PreconditionViolated("s_k(V₁:kᵀN) = 0".into()));
    }
    let (sk1, perp) = if cols > k {
        let tail = dec.v.columns(k, cols - k).transpose() * n;
        (dec.d[k], spectral_norm(&tail)?)
    } else {
        (0.0, 0.0)
    };
    let y = m * n;
    let lhs = projection_distance(&dec.u.columns(0, k).into_owned(), &y)?;
    Ok(Outcome {
        lhs,
        rhs: sk1 / sk * perp / sk_g,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NbarCase {
    /// `M + E` invertible: `N̄ = b((M+E)⁻¹Y)`.
    FullRank,
    /// rank ≤ k: `N̄` drawn from the null space.
    NullSpace,
    /// k < rank < n: shared directions plus null space.
    Composite,
}

#[derive(Debug, Clone)]
pub struct Nbar {
    pub basis: Matrix,
    pub rank: usize,
    pub case: NbarCase,
    /// `‖(I − YYᵀ)(M+E)N̄‖₂`
    pub residual: f64,
    /// `‖(M+E)N̄‖₂`
    pub scale: f64,
}

/// Relative containment tolerance for [`construct_nbar`].
pub const CONTAINMENT_RTOL: f64 = 1e-8;

/// Orthonormal `n × (n−k)` matrix with `span((M+E)N̄) ⊆ span(Y)`.
///
/// Singular values below the shared rank tolerance count as zero, so the
/// containment check allows that much absolute residual on top of
/// `CONTAINMENT_RTOL · ‖(M+E)N̄‖₂`.
pub fn construct_nbar(m: &Matrix, e: &Matrix, y: &Matrix) -> Result<Nbar> {
    let n = m.nrows();
    if !m.is_square() || e.shape() != m.shape() || y.nrows() != n {
        return Err(VerifyError::InvalidParams("M, E, Y shapes disagree".into()));
    }
    let cols = y.ncols();
    if cols == 0 || cols >= n {
        return Err(VerifyError::InvalidParams(format!(
            "Y must have n-k columns with 0 < k < n, got {cols} of n={n}"
        )));
    }
    let k = n - cols;
    let s = m + e;
    let dec = svd(&s)?;
    let tol = rank_tolerance(dec.s_max(), n, n);
    let r = dec.d.iter().filter(|&&x| x > tol).count();

    let (basis, case) = if r == n {
        let inv_d = Matrix::from_diagonal(&Vector::from_iterator(n, dec.d.iter().map(|x| 1.0 / x)));
        let x = &dec.v * inv_d * (dec.u.transpose() * y);
        (orthonormal_basis(&x)?, NbarCase::FullRank)
    } else if r <= k {
        (dec.v.columns(r, cols).into_owned(), NbarCase::NullSpace)
    } else {
        let ur = dec.u.columns(0, r);
        let g = y.transpose() * ur;
        let shared = svd(&g)?;
        // the top r−k right singular vectors have singular value 1
        let vh = shared.v.columns(0, r - k);
        let inv_d = Matrix::from_diagonal(&Vector::from_iterator(r, dec.d[..r].iter().map(|x| 1.0 / x)));
        let z = orthonormal_basis(&(dec.v.columns(0, r) * inv_d * vh))?;
        let mut nb = Matrix::zeros(n, cols);
        nb.columns_mut(0, r - k).copy_from(&z);
        nb.columns_mut(r - k, n - r).copy_from(&dec.v.columns(r, n - r));
        (nb, NbarCase::Composite)
    };

    let img = &s * &basis;
    let proj = &img - y * (y.transpose() * &img);
    let residual = spectral_norm(&proj)?;
    let scale = spectral_norm(&img)?;
    if residual > CONTAINMENT_RTOL * scale + tol {
        return Err(VerifyError::ConstructionFailed { residual, scale });
    }
    Ok(Nbar {
        basis,
        rank: r,
        case,
        residual,
        scale,
    })
}

/// Spectrum summary `(U, s_k, s_{k+1})` of a symmetric PSD matrix.
fn spiked_view(m: &Matrix, k: usize) -> Result<(Matrix, f64, f64)> {
    ensure_symmetric(m, "M")?;
    let (vals, vecs) = sym_eigen(m)?;
    let n = vals.len();
    if k == 0 || k >= n {
        return Err(VerifyError::InvalidParams(format!("need 0 < k < n, got k={k} n={n}")));
    }
    if vals[n - 1] < -rank_tolerance(vals[0].abs(), n, n) {
        return hypothesis(format!("M is not PSD (λ_min = {:e})", vals[n - 1]));
    }
    Ok((vecs, vals[k - 1], vals[k].max(0.0)))
}

/// Instance-level hypotheses shared by both lemmas; returns `(δ, σ, Δ)`.
fn lemma_hypotheses(sk: f64, sk1: f64, e: &Matrix, epsilon: f64, eta: f64) -> Result<(f64, f64, f64)> {
    if !(epsilon > 0.0 && epsilon <= 0.25) {
        return hypothesis(format!("epsilon = {epsilon} outside (0, 1/4]"));
    }
    if !(eta >= 0.0) {
        return hypothesis(format!("eta = {eta} < 0"));
    }
    let delta = sk - sk1;
    if !(delta > 0.0) {
        return hypothesis("no spectral gap at k");
    }
    let sigma = sk1.sqrt();
    let cond = instance_conditions(epsilon, eta, delta, sigma);
    if !cond.all() {
        return hypothesis(format!(
            "A.2/A.3/A.4 = {}/{}/{} (phi = {:?})",
            cond.a2, cond.a3, cond.a4, cond.phi
        ));
    }
    let cap = cond.delta_cap;
    let en = spectral_norm(e)?;
    if en > cap * (1.0 + 1e-12) {
        return hypothesis(format!("‖E‖ = {en:e} > Delta = {cap:e}"));
    }
    Ok((delta, sigma, cap))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaOutcome {
    /// Subspace claim: `lhs ≤ rhs` for the overlap / distance.
    pub subspace: Outcome,
    /// Singular-value claim, oriented so that `lhs ≤ rhs` is the claim.
    pub singular: Outcome,
}

impl LemmaOutcome {
    pub fn margin(&self) -> f64 {
        self.subspace.margin().min(self.singular.margin())
    }
}

/// Orthogonal projection after perturbation: for `Y` with
/// `s₁(U₁:kᵀY) ≤ ε+η`, the constructed `N̄` has `s₁(U₁:kᵀN̄) ≤ ε` and
/// `s₁((M+E)N̄) ≤ (σ²+Δ)/√(1−(ε+η)²)`.
///
/// `σ² = s_{k+1}(M)` and `δ = s_k(M) − s_{k+1}(M)`, which is the spiked
/// spectrum's parametrisation; `k = n − Y.ncols()`.
pub fn verify_lemma1(m: &Matrix, e: &Matrix, y: &Matrix, epsilon: f64, eta: f64) -> Result<(LemmaOutcome, NbarCase)> {
    let n = m.nrows();
    if y.nrows() != n || y.ncols() == 0 || y.ncols() >= n {
        return Err(VerifyError::InvalidParams("Y must be n x (n-k), 0 < k < n".into()));
    }
    let k = n - y.ncols();
    let (u, sk, sk1) = spiked_view(m, k)?;
    if !(sk1 > 0.0) {
        return hypothesis("M is not positive definite");
    }
    let (_, sigma, cap) = lemma_hypotheses(sk, sk1, e, epsilon, eta)?;
    if orthonormality_defect(y) > 1e-10 {
        return hypothesis("Y is not orthonormal");
    }
    let u1 = u.columns(0, k).into_owned();
    let overlap_y = spectral_norm(&(u1.transpose() * y))?;
    let e_tot = epsilon + eta;
    if overlap_y > e_tot * (1.0 + 1e-12) {
        return hypothesis(format!("s₁(U₁ᵀY) = {overlap_y} > eps + eta = {e_tot}"));
    }

    let nb = construct_nbar(m, e, y)?;
    let overlap = spectral_norm(&(u1.transpose() * &nb.basis))?;
    let norm = spectral_norm(&((m + e) * &nb.basis))?;
    let bound = (sigma * sigma + cap) / (1.0 - e_tot * e_tot).sqrt();
    Ok((
        LemmaOutcome {
            subspace: Outcome { lhs: overlap, rhs: epsilon },
            singular: Outcome { lhs: norm, rhs: bound },
        },
        nb.case,
    ))
}

/// Projection after perturbation: for `W` with `d(U₁:k, W) ≤ ε+η`,
/// `s_k((M+E)W) ≥ √(1−(ε+η)²)(δ+σ²) − Δ` and `d(U₁:k, (M+E)W) ≤ ε`.
///
/// `δ + σ² = s_k(M)`, `σ² = s_{k+1}(M)`; `k = W.ncols()`.
pub fn verify_lemma2(m: &Matrix, e: &Matrix, w: &Matrix, epsilon: f64, eta: f64) -> Result<LemmaOutcome> {
    let k = w.ncols();
    if w.nrows() != m.nrows() {
        return Err(VerifyError::InvalidParams("W must be n x k".into()));
    }
    let (u, sk, sk1) = spiked_view(m, k)?;
    let (_, _, cap) = lemma_hypotheses(sk, sk1, e, epsilon, eta)?;
    if orthonormality_defect(w) > 1e-10 {
        return hypothesis("W is not orthonormal");
    }
    let u1 = u.columns(0, k).into_owned();
    let e_tot = epsilon + eta;
    let dw = projection_distance(&u1, w)?;
    if dw > e_tot * (1.0 + 1e-12) {
        return hypothesis(format!("d(U₁, W) = {dw} > eps + eta = {e_tot}"));
    }
    let mw = (m + e) * w;
    let sk_mw = singular_value(&mw, k)?;
    let bound = (1.0 - e_tot * e_tot).sqrt() * sk - cap;
    let dist = projection_distance(&u1, &mw)?;
    Ok(LemmaOutcome {
        subspace: Outcome { lhs: dist, rhs: epsilon },
        // s_k ≥ bound, written as −s_k ≤ −bound
        singular: Outcome { lhs: -sk_mw, rhs: -bound },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DkOutcome {
    /// `‖U₁:kU₁:kᵀ − Û₁:kÛ₁:kᵀ‖₂`
    pub lhs: f64,
    pub norm_b: f64,
    pub gap: f64,
    /// `‖B‖/(gap + ‖B‖)` as displayed.
    pub literal: Outcome,
    /// `‖B‖/(gap − ‖B‖)`, defined for `‖B‖ < gap`.
    pub corrected: Option<Outcome>,
}

/// Davis–Kahan for symmetric `A` and perturbation `B`, top-k eigenspaces.
pub fn verify_davis_kahan(a: &Matrix, b: &Matrix, k: usize) -> Result<DkOutcome> {
    ensure_symmetric(a, "A")?;
    ensure_symmetric(b, "B")?;
    if a.shape() != b.shape() {
        return Err(VerifyError::InvalidParams("A and B differ in shape".into()));
    }
    let n = a.nrows();
    if k == 0 || k >= n {
        return Err(VerifyError::InvalidParams(format!("need 0 < k < n, got k={k} n={n}")));
    }
    let (va, ua) = sym_eigen(a)?;
    let gap = va[k - 1] - va[k];
    if gap <= 1e-12 * va[0].abs().max(1.0) {
        return Err(VerifyError::GapTooSmall { gap });
    }
    let (_, ub) = sym_eigen(&(a + b))?;
    let p = ua.columns(0, k) * ua.columns(0, k).transpose();
    let q = ub.columns(0, k) * ub.columns(0, k).transpose();
    let lhs = spectral_norm(&(p - q))?;
    let nb = spectral_norm(b)?;
    Ok(DkOutcome {
        lhs,
        norm_b: nb,
        gap,
        literal: Outcome { lhs, rhs: nb / (gap + nb) },
        corrected: (nb < gap).then(|| Outcome { lhs, rhs: nb / (gap - nb) }),
    })
}

/// Which side of `T = φ_γ^{−2/3} a^{1/3}` the horizon falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SinSumCase {
    Below,
    Above,
}

/// Sum cap multiplier: `Σ sin²θ_t ≤ SIN_SUM_CAP · σ²(σ²+δ)/δ²`.
///
/// A dense scan over `γ/δ ∈ [1e-6, 0.5]`, `a ∈ [1e-4, 1e5]` and `T` within
/// 1.5 decades of the case boundary peaks at 21.2 (near `T ≈ 3×` boundary).
/// That holds only while the boundary `φ_γ^{−2/3} a^{1/3}` is at least 1.
/// Below that, `T = 1` already gives `4((γ/δ)^{1/3} a^{−1/6} + 1)²`, which
/// has no uniform bound as `a → 0`.
pub const SIN_SUM_CAP: f64 = 24.0;

/// The case boundary `φ_γ^{−2/3} a^{1/3}` (infinite without drift).
pub fn sin_sum_boundary(delta: f64, gamma: f64, sigma: f64) -> f64 {
    if gamma > 0.0 {
        (gamma / delta).asin().powf(-2.0 / 3.0) * spca_analysis::noise_ratio(delta, sigma).cbrt()
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SinSumOutcome {
    pub sum: f64,
    /// `a = σ²(σ²+δ)/δ²`
    pub a: f64,
    pub cap: f64,
    pub case: SinSumCase,
    /// `(1/φ_γ)((θ_T − θ_0)/2 − (sin 2θ_T − sin 2θ_0)/4)`, `None` for γ = 0.
    pub integral: Option<f64>,
}

impl SinSumOutcome {
    pub fn margin(&self) -> f64 {
        self.cap - self.sum
    }
}

/// `Σ_{t=1}^T sin²θ_t` for the hypothesis angle sequence.
pub fn verify_sin_sum(delta: f64, gamma: f64, sigma: f64, t: usize) -> Result<SinSumOutcome> {
    let ang = spca_analysis::hypothesis_angles(delta, gamma, sigma, t)?;
    let sum: f64 = ang.theta.iter().map(|th| th.sin().powi(2)).sum();
    let a = spca_analysis::noise_ratio(delta, sigma);
    let phi_g = (gamma / delta).asin();
    let boundary = sin_sum_boundary(delta, gamma, sigma);
    let integral = (gamma > 0.0).then(|| {
        let th_t = *ang.theta.last().unwrap();
        let th_0 = (th_t - t as f64 * phi_g).max(0.0);
        ((th_t - th_0) / 2.0 - ((2.0 * th_t).sin() - (2.0 * th_0).sin()) / 4.0) / phi_g
    });
    Ok(SinSumOutcome {
        sum,
        a,
        cap: SIN_SUM_CAP * a,
        case: if (t as f64) > boundary {
            SinSumCase::Above
        } else {
            SinSumCase::Below
        },
        integral,
    })
}

/// Weyl: `s_i(A+B) ≤ s_i(A) + s₁(B)` for every i; the worst index is returned.
pub fn verify_weyl(a: &Matrix, b: &Matrix) -> Result<Outcome> {
    if a.shape() != b.shape() {
        return Err(VerifyError::InvalidParams("A and B differ in shape".into()));
    }
    let sa = singular_values(a)?;
    let sab = singular_values(&(a + b))?;
    let nb = spectral_norm(b)?;
    let worst = sa
        .iter()
        .zip(&sab)
        .map(|(x, y)| Outcome { lhs: *y, rhs: x + nb })
        .min_by(|p, q| p.margin().total_cmp(&q.margin()))
        .expect("nonempty");
    Ok(worst)
}

/// `‖MN‖₂ ≤ ‖M‖₂‖N‖₂` and, for a square `k × k` inner factor with
/// `k ≤ M.ncols()`, `s_k(MN) ≥ s_k(M)s_k(N)`.
pub fn verify_norm_ineq(m: &Matrix, n: &Matrix) -> Result<(Outcome, Outcome)> {
    if m.ncols() != n.nrows() || !n.is_square() || m.nrows() < m.ncols() {
        return Err(VerifyError::InvalidParams(
            "need M m x k (m >= k) and N k x k".into(),
        ));
    }
    let k = n.ncols();
    let mn = m * n;
    let upper = Outcome {
        lhs: spectral_norm(&mn)?,
        rhs: spectral_norm(m)? * spectral_norm(n)?,
    };
    let lower = Outcome {
        lhs: singular_value(m, k)? * singular_value(n, k)?,
        rhs: singular_value(&mn, k)?,
    };
    Ok((upper, lower))
}
