//! Samplers for admissible instances. Spectra are built directly rather than
//! rejection-sampled, so most draws satisfy the lemma hypotheses.

use rand::Rng;
use rand_distr::StandardNormal;
use spca_analysis::instance_conditions;
use spca_linalg::{orthonormal_basis, spectral_norm, Matrix};

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix {
    loop {
        if let Ok(q) = orthonormal_basis(&gaussian(rng, n, n)) {
            return q;
        }
    }
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Fraction in `[0, 1]`, exactly 1 with probability `p_edge` (boundary stress).
fn fraction<R: Rng + ?Sized>(rng: &mut R, p_edge: f64) -> f64 {
    if rng.random_bool(p_edge) {
        1.0
    } else {
        rng.random_range(0.0..1.0)
    }
}

/// A matrix of spectral norm exactly `norm` (zero if `norm == 0`).
fn scaled<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, norm: f64, symmetric: bool) -> Matrix {
    let mut g = gaussian(rng, rows, cols);
    if symmetric {
        g = (&g + g.transpose()) / 2.0;
    }
    let s = spectral_norm(&g).unwrap_or(0.0);
    if s == 0.0 || norm == 0.0 {
        Matrix::zeros(rows, cols)
    } else {
        g * (norm / s)
    }
}

/// `M = U diag(δ+σ² (k times), σ² (n−k times)) Uᵀ`.
fn spiked<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize, delta: f64, sigma: f64) -> (Matrix, Matrix) {
    let u = orthogonal(rng, n);
    let s2 = sigma * sigma;
    let d: Vec<f64> = (0..n).map(|i| if i < k { delta + s2 } else { s2 }).collect();
    let m = &u * Matrix::from_diagonal(&d.into()) * u.transpose();
    ((&m + m.transpose()) / 2.0, u)
}

/// `b(A + B R)` with `A`, `B` orthonormal and mutually orthogonal and `R`
/// scaled so that the result has largest principal angle `asin(c)` to `A`.
fn tilted<R: Rng + ?Sized>(rng: &mut R, a: &Matrix, b: &Matrix, c: f64) -> Matrix {
    let t = c.asin().tan();
    let r = scaled(rng, b.ncols(), a.ncols(), t, false);
    orthonormal_basis(&(a + b * r)).expect("identity block keeps full rank")
}

#[derive(Debug, Clone)]
pub struct PmStatInstance {
    pub m: Matrix,
    pub n: Matrix,
}

pub fn pm_stat_instance<R: Rng + ?Sized>(rng: &mut R, max_n: usize) -> PmStatInstance {
    let cols = rng.random_range(2..=max_n.min(16).max(2));
    let rows = rng.random_range(cols..=max_n.max(cols));
    let k = rng.random_range(1..=cols);
    let mut s: Vec<f64> = (0..cols).map(|_| log_uniform(rng, 0.05, 20.0)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    let u = orthonormal_basis(&gaussian(rng, rows, cols)).unwrap();
    let v = orthogonal(rng, cols);
    let m = u * Matrix::from_diagonal(&s.into()) * v.transpose();
    PmStatInstance {
        m,
        n: gaussian(rng, cols, k),
    }
}

/// Parameters shared by the Lemma 1 / Lemma 2 samplers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaParams {
    pub n: usize,
    pub k: usize,
    pub delta: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub eta: f64,
}

/// Largest `η` for which A.2–A.4 hold (bisection; the feasible set is an
/// interval starting at 0). `None` if even `η = 0` fails.
pub fn eta_max(epsilon: f64, delta: f64, sigma: f64) -> Option<f64> {
    let ok = |eta: f64| instance_conditions(epsilon, eta, delta, sigma).all();
    if !ok(0.0) {
        return None;
    }
    let (mut lo, mut hi) = (0.0, (1.0 - epsilon).min(32.0 * epsilon));
    if ok(hi) {
        return Some(hi);
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Draws `(n, k, δ, σ, ε, η)`; `None` when the drawn spectrum admits no η.
/// `epsilon` pins ε (e.g. to the 1/4 boundary).
pub fn lemma_params<R: Rng + ?Sized>(
    rng: &mut R,
    max_n: usize,
    epsilon: Option<f64>,
    allow_zero_sigma: bool,
) -> Option<LemmaParams> {
    let n = rng.random_range(2..=max_n.max(2));
    let k = rng.random_range(1..n);
    let delta = log_uniform(rng, 0.2, 10.0);
    let sigma = if allow_zero_sigma && rng.random_bool(0.1) {
        0.0
    } else {
        rng.random_range(0.1..3.0)
    };
    let epsilon = epsilon.unwrap_or_else(|| {
        if rng.random_bool(0.1) {
            0.25
        } else {
            rng.random_range(0.01..0.25)
        }
    });
    let top = eta_max(epsilon, delta, sigma)?;
    let eta = top * fraction(rng, 0.1);
    Some(LemmaParams {
        n,
        k,
        delta,
        sigma,
        epsilon,
        eta,
    })
}

#[derive(Debug, Clone)]
pub struct LemmaInstance {
    pub params: LemmaParams,
    pub m: Matrix,
    pub e: Matrix,
    /// `Y` (n × (n−k)) for Lemma 1, `W` (n × k) for Lemma 2.
    pub frame: Matrix,
}

fn perturbation<R: Rng + ?Sized>(rng: &mut R, prm: &LemmaParams) -> Matrix {
    let cap = prm.epsilon * prm.delta / 4.0;
    let norm = cap * fraction(rng, 0.2);
    scaled(rng, prm.n, prm.n, norm, false)
}

fn angle_budget<R: Rng + ?Sized>(rng: &mut R, prm: &LemmaParams) -> f64 {
    // stay a hair inside the hypothesis so round-off does not reject the draw
    (prm.epsilon + prm.eta) * fraction(rng, 0.2) * (1.0 - 1e-13)
}

pub fn lemma1_instance<R: Rng + ?Sized>(rng: &mut R, prm: LemmaParams) -> LemmaInstance {
    let (m, u) = spiked(rng, prm.n, prm.k, prm.delta, prm.sigma);
    let e = perturbation(rng, &prm);
    let c = angle_budget(rng, &prm);
    let u1 = u.columns(0, prm.k).into_owned();
    let u2 = u.columns(prm.k, prm.n - prm.k).into_owned();
    let y = tilted(rng, &u2, &u1, c);
    LemmaInstance { params: prm, m, e, frame: y }
}

pub fn lemma2_instance<R: Rng + ?Sized>(rng: &mut R, prm: LemmaParams) -> LemmaInstance {
    let (m, u) = spiked(rng, prm.n, prm.k, prm.delta, prm.sigma);
    let e = perturbation(rng, &prm);
    let c = angle_budget(rng, &prm);
    let u1 = u.columns(0, prm.k).into_owned();
    let u2 = u.columns(prm.k, prm.n - prm.k).into_owned();
    let w = tilted(rng, &u1, &u2, c);
    LemmaInstance { params: prm, m, e, frame: w }
}

#[derive(Debug, Clone)]
pub struct DkInstance {
    pub a: Matrix,
    pub b: Matrix,
    pub k: usize,
}

/// PSD `A` with a gap of at least 0.05 at `k`; symmetric `B` with `‖B‖₂`
/// uniform in `(0, gap)`.
pub fn dk_instance<R: Rng + ?Sized>(rng: &mut R, max_n: usize) -> DkInstance {
    let n = rng.random_range(2..=max_n.max(2));
    let k = rng.random_range(1..n);
    let mut lam: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    lam.sort_by(|a, b| b.total_cmp(a));
    if lam[k - 1] - lam[k] < 0.05 {
        let lift = 0.05 - (lam[k - 1] - lam[k]);
        for l in lam.iter_mut().take(k) {
            *l += lift;
        }
    }
    let gap = lam[k - 1] - lam[k];
    let u = orthogonal(rng, n);
    let a = &u * Matrix::from_diagonal(&lam.into()) * u.transpose();
    let a = (&a + a.transpose()) / 2.0;
    let nb = gap * rng.random_range(1e-6..1.0);
    DkInstance {
        a,
        b: scaled(rng, n, n, nb, true),
        k,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinSumParams {
    pub delta: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub t: usize,
}

/// Horizons straddle the case boundary `φ_γ^{−2/3} a^{1/3}` by up to 1.5
/// decades on either side, capped at `max_t`. `None` when the boundary is
/// below 1: no horizon falls on its lower side and the sum has no uniform
/// cap there (see [`crate::SIN_SUM_CAP`]).
pub fn sin_sum_params<R: Rng + ?Sized>(rng: &mut R, max_t: usize) -> Option<SinSumParams> {
    let delta = log_uniform(rng, 0.1, 10.0);
    let sigma = rng.random_range(0.1..3.0);
    let gamma = delta * log_uniform(rng, 1e-8, 0.5);
    let a = sigma * sigma * (sigma * sigma + delta) / (delta * delta);
    let boundary = (gamma / delta).asin().powf(-2.0 / 3.0) * a.cbrt();
    if boundary < 1.0 {
        return None;
    }
    let t = (boundary * 10f64.powf(rng.random_range(-1.5..1.5))).round();
    Some(SinSumParams {
        delta,
        gamma,
        sigma,
        t: (t as usize).clamp(1, max_t),
    })
}

pub fn weyl_instance<R: Rng + ?Sized>(rng: &mut R, max_n: usize) -> (Matrix, Matrix) {
    let rows = rng.random_range(1..=max_n);
    let cols = rng.random_range(1..=max_n);
    let a = gaussian(rng, rows, cols);
    let b = gaussian(rng, rows, cols) * rng.random_range(0.0..2.0);
    (a, b)
}

pub fn norm_ineq_instance<R: Rng + ?Sized>(rng: &mut R, max_n: usize) -> (Matrix, Matrix) {
    let k = rng.random_range(1..=max_n.min(10));
    let m = rng.random_range(k..=max_n.max(k));
    (gaussian(rng, m, k), gaussian(rng, k, k))
}
