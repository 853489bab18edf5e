use rand::Rng;
use rand_distr::StandardNormal;
use spca_linalg::{
    distance_orthonormal, orthonormal_basis, orthonormality_defect, rank_tolerance, svd,
    LinalgError, Matrix,
};
use spca_model::rng::{stream, Purpose};
use spca_model::{covariance, PathSource, Sampler, SpikedParams};

use crate::baseline::oracle_subspace;
use crate::{NpmError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpmConfig {
    pub p: usize,
    pub k: usize,
    /// Block size.
    pub b: usize,
    /// Number of blocks (iterations); the run consumes `T = B·L` samples.
    pub l: usize,
    /// Target accuracy ε ∈ (0, 1/4].
    pub epsilon: f64,
    /// Seed of the initial iterate.
    pub seed: u64,
    /// Accept ε > 1/4.
    pub allow_large_epsilon: bool,
}

impl NpmConfig {
    pub fn new(p: usize, k: usize, b: usize, l: usize, epsilon: f64, seed: u64) -> Self {
        NpmConfig {
            p,
            k,
            b,
            l,
            epsilon,
            seed,
            allow_large_epsilon: false,
        }
    }

    pub fn stream_len(&self) -> usize {
        self.b * self.l
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NpmError::InvalidConfig(m));
        if self.k == 0 || self.k >= self.p {
            return bad(format!("need 1 <= k < p, got k={} p={}", self.k, self.p));
        }
        if self.b == 0 || self.l == 0 {
            return bad("B and L must be positive".into());
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.epsilon > 0.25 && !self.allow_large_epsilon {
            return bad(format!(
                "epsilon = {} > 1/4 requires allow_large_epsilon",
                self.epsilon
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpmState {
    /// Orthonormal `p × k` iterate `Q⁽ˡ⁾`.
    pub q: Matrix,
    pub blocks_consumed: usize,
    pub last_error_vs_oracle: Option<f64>,
}

/// `Q⁽⁰⁾ = b(G)` for a Gaussian `p × k` matrix `G` drawn from the `Init` stream.
pub fn init_iterate(p: usize, k: usize, seed: u64) -> Result<NpmState> {
    if k == 0 || k >= p {
        return Err(NpmError::InvalidConfig(format!(
            "need 1 <= k < p, got k={k} p={p}"
        )));
    }
    // a Gaussian matrix is rank deficient with probability zero; redraw just in case
    for attempt in 0..16 {
        let mut rng = stream(seed, Purpose::Init, attempt);
        let g = Matrix::from_fn(p, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        if let Ok(q) = orthonormal_basis(&g) {
            return Ok(NpmState {
                q,
                blocks_consumed: 0,
                last_error_vs_oracle: None,
            });
        }
    }
    Err(LinalgError::RankDeficient {
        smallest: 0.0,
        tolerance: 0.0,
    }
    .into())
}

/// Streamed `(1/B) Σ_t x_t (x_tᵀ Q)` with O(p·k) state.
#[derive(Debug, Clone)]
pub struct BlockAccumulator {
    p: usize,
    k: usize,
    acc: Vec<f64>,
    y: Vec<f64>,
    count: usize,
}

impl BlockAccumulator {
    pub fn new(p: usize, k: usize) -> Self {
        BlockAccumulator {
            p,
            k,
            acc: vec![0.0; p * k],
            y: vec![0.0; k],
            count: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn reset(&mut self) {
        self.acc.iter_mut().for_each(|a| *a = 0.0);
        self.count = 0;
    }

    /// Adds `x (xᵀ Q)`; `q` is column-major `p × k`.
    #[inline]
    pub fn push(&mut self, x: &[f64], q: &Matrix) {
        let p = self.p;
        let qs = q.as_slice();
        for j in 0..self.k {
            let col = &qs[j * p..(j + 1) * p];
            self.y[j] = col.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        for j in 0..self.k {
            let yj = self.y[j];
            let dst = &mut self.acc[j * p..(j + 1) * p];
            for (d, &xi) in dst.iter_mut().zip(x) {
                *d += xi * yj;
            }
        }
        self.count += 1;
    }

    /// The averaged product `(1/B) Σ x xᵀ Q`.
    pub fn product(&self) -> Matrix {
        let inv = 1.0 / self.count.max(1) as f64;
        Matrix::from_iterator(self.p, self.k, self.acc.iter().map(|a| a * inv))
    }
}

/// Streamed accumulator for an explicit `p × B` block.
pub fn accumulate_block(q: &Matrix, block: &Matrix) -> Matrix {
    let (p, k) = q.shape();
    let mut acc = BlockAccumulator::new(p, k);
    for t in 0..block.ncols() {
        acc.push(block.column(t).as_slice(), q);
    }
    acc.product()
}

/// Dense reference `(1/B) (X Xᵀ) Q`, materialising the `p × p` covariance.
pub fn dense_block_product(q: &Matrix, block: &Matrix) -> Matrix {
    let cov = block * block.transpose() / block.ncols() as f64;
    cov * q
}

/// One step of the power method on an explicit block.
///
/// Fails with `RankDeficient` when the product loses column rank;
/// [`run_npm`] recovers from that instead.
pub fn block_update(state: &NpmState, block: &Matrix) -> Result<NpmState> {
    let (p, k) = state.q.shape();
    if block.nrows() != p || block.ncols() == 0 {
        return Err(LinalgError::ShapeMismatch {
            left: state.q.shape(),
            right: block.shape(),
        }
        .into());
    }
    let q = orthonormal_basis(&accumulate_block(&state.q, block))?;
    debug_assert!(orthonormality_defect(&q) <= 1e-10, "p={p} k={k}");
    Ok(NpmState {
        q,
        blocks_consumed: state.blocks_consumed + 1,
        last_error_vs_oracle: None,
    })
}

/// Columns replaced after a rank collapse.
#[derive(Debug, Clone, PartialEq)]
pub struct ReinitEvent {
    /// 0-based block index.
    pub block: usize,
    pub dead_columns: usize,
}

/// Keeps the well-conditioned part of `s` and refills the rest with fresh
/// Gaussian directions orthogonalised against the survivors.
fn recover_basis<R: Rng>(s: &Matrix, rng: &mut R) -> Result<(Matrix, usize)> {
    let (p, k) = s.shape();
    let dec = svd(s)?;
    let tol = rank_tolerance(dec.s_max(), p, k);
    let r = dec.d.iter().filter(|&&x| x > tol).count();
    let mut q = Matrix::zeros(p, k);
    q.columns_mut(0, r).copy_from(&dec.u.columns(0, r));
    let mut j = r;
    while j < k {
        let mut v: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for c in 0..j {
                let col = q.column(c);
                let dot: f64 = col.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, ci) in v.iter_mut().zip(col.iter()) {
                    *vi -= dot * ci;
                }
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            for (i, vi) in v.iter().enumerate() {
                q[(i, j)] = vi / n;
            }
            j += 1;
        }
    }
    Ok((q, k - r))
}

/// Sees every observation of a run, in stream order.
pub trait StreamObserver {
    /// `t` is the 0-based sample index.
    fn observe(&mut self, t: usize, x: &[f64]);
}

pub struct NullObserver;

impl StreamObserver for NullObserver {
    fn observe(&mut self, _t: usize, _x: &[f64]) {}
}

#[derive(Debug, Clone)]
pub struct NpmRun {
    pub state: NpmState,
    /// `error_trace[l] = d(Q⁽ˡ⁺¹⁾, top-k of A_{(l+1)B} A_{(l+1)B}ᵀ + σ²I)`.
    pub error_trace: Vec<f64>,
    /// Samples of the path beyond `B·L`, never consumed.
    pub dropped_samples: usize,
    pub reinit_events: Vec<ReinitEvent>,
    /// Oracle subspace at the last consumed sample.
    pub final_oracle: Matrix,
    /// `A_t` at the last consumed sample.
    pub final_factor: Matrix,
}

pub fn run_npm(params: &SpikedParams, config: &NpmConfig, path: &dyn PathSource) -> Result<NpmRun> {
    run_npm_observed(params, config, path, &mut NullObserver)
}

/// Algorithm 1 over `L` blocks of fresh samples; block `l` draws from the
/// `(params.seed, Sample, l)` stream.
pub fn run_npm_observed(
    params: &SpikedParams,
    config: &NpmConfig,
    path: &dyn PathSource,
    observer: &mut dyn StreamObserver,
) -> Result<NpmRun> {
    params.validate()?;
    config.validate()?;
    if (params.p, params.k) != (config.p, config.k) || (path.p(), path.k()) != (config.p, config.k)
    {
        return Err(NpmError::InvalidConfig(
            "params, config and path disagree on (p, k)".into(),
        ));
    }
    let need = config.stream_len();
    if path.len() < need {
        return Err(NpmError::InvalidConfig(format!(
            "path has {} samples, B*L = {need}",
            path.len()
        )));
    }

    let (p, k) = (config.p, config.k);
    let mut state = init_iterate(p, k, config.seed)?;
    let mut cursor = path.cursor();
    let mut sampler = Sampler::new(k, params.sigma);
    let mut acc = BlockAccumulator::new(p, k);
    let mut x = vec![0.0; p];
    let mut trace = Vec::with_capacity(config.l);
    let mut events = Vec::new();
    let mut oracle = Matrix::zeros(p, k);

    for l in 0..config.l {
        let mut rng = stream(params.seed, Purpose::Sample, l as u64);
        acc.reset();
        for i in 0..config.b {
            let t = l * config.b + i;
            if t > 0 {
                cursor.advance();
            }
            debug_assert_eq!(cursor.position(), t);
            sampler.draw(cursor.factor(), &mut rng, &mut x);
            observer.observe(t, &x);
            acc.push(&x, &state.q);
        }
        let s = acc.product();
        let q = match orthonormal_basis(&s) {
            Ok(q) => q,
            Err(LinalgError::RankDeficient { .. }) => {
                let mut rr = stream(config.seed, Purpose::Reinit, l as u64);
                let (q, dead) = recover_basis(&s, &mut rr)?;
                events.push(ReinitEvent {
                    block: l,
                    dead_columns: dead,
                });
                q
            }
            Err(e) => return Err(e.into()),
        };
        oracle = oracle_subspace(&covariance(cursor.factor(), params.sigma), k)?;
        let err = distance_orthonormal(&q, &oracle)?;
        trace.push(err);
        state = NpmState {
            q,
            blocks_consumed: l + 1,
            last_error_vs_oracle: Some(err),
        };
    }

    Ok(NpmRun {
        state,
        error_trace: trace,
        dropped_samples: path.len() - need,
        reinit_events: events,
        final_oracle: oracle,
        final_factor: cursor.factor().clone(),
    })
}
