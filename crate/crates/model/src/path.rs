use rand::Rng as _;
use rand_distr::StandardNormal;
use spca_linalg::{gram_difference_norm, qr_q, singular_values, Matrix};

use crate::rng::{stream, Purpose, Rng};
use crate::{ModelError, Result, SpikedParams};

/// Slack on the certified drift of generated paths.
pub const DRIFT_SLACK: f64 = 1e-10;

/// Re-orthonormalise the rotating frame this often to stop round-off creep.
const REORTH_EVERY: usize = 64;

/// A materialised sequence of `p × k` factors `A_1, …, A_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspacePath {
    pub factors: Vec<Matrix>,
    /// Largest realised one-step drift `‖A_tA_tᵀ − A_{t−1}A_{t−1}ᵀ‖₂`.
    pub gamma_certified: f64,
}

impl SubspacePath {
    /// Wraps factors and certifies their drift.
    pub fn new(factors: Vec<Matrix>) -> Result<Self> {
        let first = factors
            .first()
            .ok_or_else(|| ModelError::InvalidParams("empty path".into()))?;
        let shape = first.shape();
        if let Some(bad) = factors.iter().find(|f| f.shape() != shape) {
            return Err(ModelError::ShapeMismatch(format!(
                "factor {:?} vs {:?}",
                bad.shape(),
                shape
            )));
        }
        let mut path = SubspacePath {
            factors,
            gamma_certified: 0.0,
        };
        path.gamma_certified = drift_check(&path)?;
        Ok(path)
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn p(&self) -> usize {
        self.factors[0].nrows()
    }

    pub fn k(&self) -> usize {
        self.factors[0].ncols()
    }
}

/// Max over consecutive steps of `‖A_tA_tᵀ − A_{t−1}A_{t−1}ᵀ‖₂`; 0 for one factor.
pub fn drift_check(path: &SubspacePath) -> Result<f64> {
    let mut worst = 0.0f64;
    for w in path.factors.windows(2) {
        worst = worst.max(gram_difference_norm(&w[1], &w[0])?);
    }
    Ok(worst)
}

/// `min_t s_k(A_tA_tᵀ)`.
pub fn min_spike(path: &SubspacePath) -> Result<f64> {
    let k = path.k();
    let mut lo = f64::INFINITY;
    for a in &path.factors {
        let s = singular_values(a)?[k - 1];
        lo = lo.min(s * s);
    }
    Ok(lo)
}

/// Sequential access to a path without materialising it.
pub trait PathSource: Sync {
    fn p(&self) -> usize;
    fn k(&self) -> usize;
    fn len(&self) -> usize;
    fn cursor(&self) -> Box<dyn PathCursor + Send + '_>;
}

pub trait PathCursor {
    /// `A_{t+1}` for the current 0-based position `t`.
    fn factor(&self) -> &Matrix;
    fn position(&self) -> usize;
    /// Moves to the next time step; returns `false` (and stays put) at the end.
    fn advance(&mut self) -> bool;
}

struct SliceCursor<'a> {
    factors: &'a [Matrix],
    pos: usize,
}

impl PathCursor for SliceCursor<'_> {
    fn factor(&self) -> &Matrix {
        &self.factors[self.pos]
    }
    fn position(&self) -> usize {
        self.pos
    }
    fn advance(&mut self) -> bool {
        if self.pos + 1 < self.factors.len() {
            self.pos += 1;
            true
        } else {
            false
        }
    }
}

impl PathSource for SubspacePath {
    fn p(&self) -> usize {
        SubspacePath::p(self)
    }
    fn k(&self) -> usize {
        SubspacePath::k(self)
    }
    fn len(&self) -> usize {
        self.factors.len()
    }
    fn cursor(&self) -> Box<dyn PathCursor + Send + '_> {
        Box::new(SliceCursor {
            factors: &self.factors,
            pos: 0,
        })
    }
}

/// One factor repeated `len` times.
#[derive(Debug, Clone)]
pub struct StationaryPath {
    pub factor: Matrix,
    pub len: usize,
}

struct RepeatCursor<'a> {
    factor: &'a Matrix,
    pos: usize,
    len: usize,
}

impl PathCursor for RepeatCursor<'_> {
    fn factor(&self) -> &Matrix {
        self.factor
    }
    fn position(&self) -> usize {
        self.pos
    }
    fn advance(&mut self) -> bool {
        if self.pos + 1 < self.len {
            self.pos += 1;
            true
        } else {
            false
        }
    }
}

impl PathSource for StationaryPath {
    fn p(&self) -> usize {
        self.factor.nrows()
    }
    fn k(&self) -> usize {
        self.factor.ncols()
    }
    fn len(&self) -> usize {
        self.len
    }
    fn cursor(&self) -> Box<dyn PathCursor + Send + '_> {
        Box::new(RepeatCursor {
            factor: &self.factor,
            pos: 0,
            len: self.len,
        })
    }
}

/// Lazily generated rotating path; identical to [`generate_rotating_path`]
/// factor for factor, but holds only the current frame.
#[derive(Debug, Clone)]
pub struct RotatingPath {
    pub params: SpikedParams,
    pub len: usize,
}

impl RotatingPath {
    pub fn new(params: SpikedParams, len: usize) -> Result<Self> {
        params.validate()?;
        if len == 0 {
            return Err(ModelError::InvalidParams("T must be >= 1".into()));
        }
        Ok(RotatingPath { params, len })
    }

    pub fn rotating_cursor(&self) -> RotatingCursor {
        RotatingCursor::new(&self.params, self.len)
    }
}

impl PathSource for RotatingPath {
    fn p(&self) -> usize {
        self.params.p
    }
    fn k(&self) -> usize {
        self.params.k
    }
    fn len(&self) -> usize {
        self.len
    }
    fn cursor(&self) -> Box<dyn PathCursor + Send + '_> {
        Box::new(self.rotating_cursor())
    }
}

/// Dot product with independent partial sums (lets the compiler vectorise).
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Random orthonormal frame rotated each step by a Givens rotation of angle
/// `asin(γ/δ)` in the plane of a random in-span direction `u = F c` and a
/// random complement direction `v`:
/// `F ← F + ((cos φ − 1) u + sin φ · v) cᵀ`.
pub struct RotatingCursor {
    frame: Matrix,
    a: Matrix,
    scale: f64,
    sin: f64,
    cos: f64,
    rng: Rng,
    pos: usize,
    len: usize,
    c: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl RotatingCursor {
    fn new(params: &SpikedParams, len: usize) -> Self {
        let (p, k) = (params.p, params.k);
        let mut rng = stream(params.seed, Purpose::Path, 0);
        let g = Matrix::from_fn(p, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let frame = qr_q(&g);
        let scale = params.delta.sqrt();
        let sin = (params.gamma / params.delta).min(1.0);
        RotatingCursor {
            a: &frame * scale,
            frame,
            scale,
            sin,
            cos: (1.0 - sin * sin).sqrt(),
            rng,
            pos: 0,
            len,
            c: vec![0.0; k],
            u: vec![0.0; p],
            v: vec![0.0; p],
        }
    }

    /// Current orthonormal frame (span of `A_t`).
    pub fn frame(&self) -> &Matrix {
        &self.frame
    }

    fn rotate(&mut self) {
        let (p, k) = self.frame.shape();
        loop {
            let mut n2 = 0.0;
            for c in self.c.iter_mut() {
                *c = self.rng.sample(StandardNormal);
                n2 += *c * *c;
            }
            if n2 > 1e-24 {
                let inv = n2.sqrt().recip();
                self.c.iter_mut().for_each(|c| *c *= inv);
                break;
            }
        }
        let f = self.frame.as_mut_slice();
        loop {
            for v in self.v.iter_mut() {
                *v = self.rng.sample(StandardNormal);
            }
            // v ← (I − FFᵀ) g, twice for numerical orthogonality
            for _ in 0..2 {
                for col in f.chunks_exact(p) {
                    let dot = dot(col, &self.v);
                    for (vi, fi) in self.v.iter_mut().zip(col) {
                        *vi -= dot * fi;
                    }
                }
            }
            let n = dot(&self.v, &self.v).sqrt();
            if n > 1e-8 {
                let inv = n.recip();
                self.v.iter_mut().for_each(|x| *x *= inv);
                break;
            }
        }
        self.u.iter_mut().for_each(|x| *x = 0.0);
        for (col, &cj) in f.chunks_exact(p).zip(&self.c) {
            for (ui, fi) in self.u.iter_mut().zip(col) {
                *ui += cj * fi;
            }
        }
        let (cm1, s) = (self.cos - 1.0, self.sin);
        for (col, &cj) in f.chunks_exact_mut(p).zip(&self.c) {
            for ((fi, ui), vi) in col.iter_mut().zip(&self.u).zip(&self.v) {
                *fi += (cm1 * ui + s * vi) * cj;
            }
        }
        debug_assert_eq!(f.len(), p * k);
        if (self.pos + 1) % REORTH_EVERY == 0 {
            self.frame = qr_q(&self.frame);
        }
        self.a.copy_from(&self.frame);
        self.a *= self.scale;
    }
}

impl PathCursor for RotatingCursor {
    fn factor(&self) -> &Matrix {
        &self.a
    }
    fn position(&self) -> usize {
        self.pos
    }
    fn advance(&mut self) -> bool {
        if self.pos + 1 >= self.len {
            return false;
        }
        if self.sin > 0.0 {
            self.rotate();
        }
        self.pos += 1;
        true
    }
}

/// Materialises a rotating path and certifies `gamma_certified ≤ γ + 1e-10`.
pub fn generate_rotating_path(params: &SpikedParams, t: usize) -> Result<SubspacePath> {
    let src = RotatingPath::new(*params, t)?;
    let mut cur = src.rotating_cursor();
    let mut factors = Vec::with_capacity(t);
    factors.push(cur.factor().clone());
    while cur.advance() {
        factors.push(cur.factor().clone());
    }
    let path = SubspacePath::new(factors)?;
    if path.gamma_certified > params.gamma + DRIFT_SLACK {
        return Err(ModelError::ConstructionCheck(format!(
            "certified drift {:e} exceeds gamma {:e}",
            path.gamma_certified, params.gamma
        )));
    }
    Ok(path)
}
