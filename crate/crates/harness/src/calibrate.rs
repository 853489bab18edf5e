//! Monte-Carlo calibration of the noise-bound constant `C` in
//! `‖E(l)‖₂ ≤ √(C p log T / B) + Bγ/2`.
//!
//! Each block of `B` samples is drawn along its own rotating path and compared
//! with the covariance at the block midpoint, the reference point for which the
//! drift contributes at most `(B/2)γ`. The horizon is the stream the blocks
//! would form, `T = blocks · B`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spca_analysis::{empirical_noise, implied_constant, noise_bound};
use spca_linalg::Matrix;
use spca_model::rng::{derive_seed, stream, Purpose};
use spca_model::{covariance, sample_block, PathSource, RotatingPath, SpikedParams};

use crate::stats::nearest_rank;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSpec {
    pub p: Vec<usize>,
    #[serde(rename = "B")]
    pub b: Vec<usize>,
    pub gamma: Vec<f64>,
    pub k: usize,
    pub delta: f64,
    pub sigma: f64,
    /// Blocks per cell.
    pub blocks: usize,
    pub seed: u64,
    /// Quantile over cells of the constant each cell's worst block needs.
    pub quantile: f64,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        CalibrationSpec {
            p: vec![10, 25, 50],
            b: vec![500, 2000, 8000],
            gamma: vec![0.0],
            k: 3,
            delta: 1.0,
            sigma: 1.0,
            blocks: 100,
            seed: 0,
            quantile: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFit {
    pub p: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub gamma: f64,
    #[serde(rename = "T")]
    pub t: f64,
    /// Largest `‖E‖₂` over the cell's blocks.
    pub max_norm: f64,
    /// Constant implied by `max_norm`.
    pub max_c: f64,
    /// `√(C p log T/B) + Bγ/2` at the fitted `C`.
    pub bound: Option<f64>,
    pub within_bound: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    /// `None` when every cell was skipped.
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub quantile: f64,
    pub cells: Vec<CellFit>,
    /// Share of fitted cells whose maximum respects the bound at `C`.
    pub cell_pass_rate: Option<f64>,
    pub skipped: Vec<String>,
}

/// One `p × B` block and the midpoint covariance it estimates.
pub fn noise_block(
    p: usize,
    k: usize,
    delta: f64,
    sigma: f64,
    gamma: f64,
    b: usize,
    seed: u64,
) -> Result<(Matrix, Matrix)> {
    let mut rng = stream(seed, Purpose::Calibrate, 0);
    if delta == 0.0 {
        // no spike, nothing to drift
        let a = Matrix::zeros(p, k);
        let block = sample_block(&[a.clone()], sigma, b, &mut rng)?;
        return Ok((block, covariance(&a, sigma)));
    }
    let params = SpikedParams {
        p,
        k,
        delta,
        sigma,
        gamma,
        seed,
    };
    let path = RotatingPath::new(params, b)?;
    let mut cur = path.cursor();
    let mut seg = Vec::with_capacity(b);
    seg.push(cur.factor().clone());
    while cur.advance() {
        seg.push(cur.factor().clone());
    }
    let mid = covariance(&seg[b / 2], sigma);
    let block = sample_block(&seg, sigma, b, &mut rng)?;
    Ok((block, mid))
}

/// Fits `C` so that the largest `‖E‖₂` of (at least) a `spec.quantile` share
/// of the (p, B, γ) cells lies within the bound: the quantile over cells of
/// the constant implied by each cell's worst block.
pub fn fit_constant_c(spec: &CalibrationSpec) -> Result<Calibration> {
    let mut skipped = Vec::new();
    if spec.delta == 0.0 && spec.sigma == 0.0 {
        skipped.push("zero-variance stream (delta = sigma = 0): nothing to fit".into());
        return Ok(Calibration {
            c: None,
            quantile: spec.quantile,
            cells: Vec::new(),
            cell_pass_rate: None,
            skipped,
        });
    }
    let mut grid = Vec::new();
    for &p in &spec.p {
        for &b in &spec.b {
            for &g in &spec.gamma {
                if spec.k == 0 || spec.k >= p || b == 0 || spec.blocks == 0 {
                    skipped.push(format!("p={p} B={b} gamma={g}: invalid cell"));
                } else {
                    grid.push((p, b, g));
                }
            }
        }
    }
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|c| (0..spec.blocks).map(move |j| (c, j)))
        .collect();
    let norms = jobs
        .par_iter()
        .map(|&(c, j)| {
            let (p, b, g) = grid[c];
            let key = derive_seed(spec.seed, &[c as u64, j as u64]);
            let (block, m) = noise_block(p, spec.k, spec.delta, spec.sigma, g, b, key)?;
            Ok(empirical_noise(&block, &m)?)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut cells = Vec::with_capacity(grid.len());
    for (c, &(p, b, g)) in grid.iter().enumerate() {
        let t = (spec.blocks * b) as f64;
        let ns = &norms[c * spec.blocks..(c + 1) * spec.blocks];
        let max_norm = ns.iter().copied().fold(0.0, f64::max);
        cells.push(CellFit {
            p,
            b,
            gamma: g,
            t,
            max_norm,
            max_c: implied_constant(max_norm, p, t.max(2.0), b as f64, g).unwrap_or(0.0),
            bound: None,
            within_bound: None,
        });
    }
    let per_cell: Vec<f64> = cells.iter().map(|c| c.max_c).collect();
    let c = nearest_rank(&per_cell, spec.quantile).filter(|&c| c > 0.0);
    if let Some(c) = c {
        for cell in &mut cells {
            let nb = noise_bound(cell.p, cell.t.max(2.0), cell.b as f64, cell.gamma, c)?.value;
            cell.bound = Some(nb);
            cell.within_bound = Some(cell.max_norm <= nb);
        }
    }
    let fitted: Vec<bool> = cells.iter().filter_map(|c| c.within_bound).collect();
    let cell_pass_rate =
        (!fitted.is_empty()).then(|| fitted.iter().filter(|&&ok| ok).count() as f64 / fitted.len() as f64);
    Ok(Calibration {
        c,
        quantile: spec.quantile,
        cells,
        cell_pass_rate,
        skipped,
    })
}
