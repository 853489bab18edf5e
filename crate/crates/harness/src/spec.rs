//! Sweep specification and its resolution into runnable cells.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use spca_analysis::{check_assumptions, noise_bound, resolve_horizon, BoundInputs, BoundReport};
use spca_model::SpikedParams;

use crate::{HarnessError, Result};

/// How the block size of each cell is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockPolicy {
    /// `B` from the spec.
    Explicit,
    /// `B = 64 C p log T / (ε²δ²)`; with no `T`, `T = B·L` is solved for.
    FromTheorem,
    /// Minimiser of the noise bound, `B* = (C p log T / γ²)^{1/3}` (`B = T` when γ = 0).
    NoiseOptimal,
}

impl fmt::Display for BlockPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockPolicy::Explicit => "explicit",
            BlockPolicy::FromTheorem => "from-theorem",
            BlockPolicy::NoiseOptimal => "noise-optimal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Npm,
    SlidingWindow,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Npm, Method::SlidingWindow, Method::Oracle];
}

/// Grids are swept as a full cartesian product in the order
/// `p, k, delta, sigma, gamma, T, epsilon` (last varies fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub p: Vec<usize>,
    pub k: Vec<usize>,
    pub delta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Horizons; empty means "solve `T = B·L`" (from-theorem only).
    #[serde(rename = "T")]
    pub t: Vec<usize>,
    pub epsilon: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub block: BlockPolicy,
    /// Block size for the explicit policy.
    #[serde(rename = "B")]
    pub b: Option<usize>,
    /// Fixes the number of blocks; otherwise `L = ⌊T/B⌋` (or the
    /// recommended `L` when `T` is solved for).
    #[serde(rename = "L")]
    pub l: Option<usize>,
    /// Noise-bound constant.
    #[serde(rename = "C")]
    pub c: f64,
    /// Random-initialisation constant for the recommended `L`.
    pub c_init: f64,
    /// Sliding-window length; defaults to the whole stream.
    pub window: Option<usize>,
    pub methods: Vec<Method>,
    pub out: Option<PathBuf>,
    /// Directory for per-trial error traces.
    pub traces: Option<PathBuf>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            p: vec![50],
            k: vec![3],
            delta: vec![1.0],
            sigma: vec![1.0],
            gamma: vec![0.0],
            t: Vec::new(),
            epsilon: vec![0.1],
            trials: 50,
            seed: 0,
            block: BlockPolicy::FromTheorem,
            b: None,
            l: None,
            c: 1.0,
            c_init: spca_analysis::DEFAULT_INIT_CONSTANT,
            window: None,
            methods: Method::ALL.to_vec(),
            out: None,
            traces: None,
        }
    }
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Spec-level problems (as opposed to per-cell ones, which are skipped).
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.trials == 0 {
            return bad("trials must be positive");
        }
        if self.methods.is_empty() {
            return bad("no methods selected");
        }
        for (name, empty) in [
            ("p", self.p.is_empty()),
            ("k", self.k.is_empty()),
            ("delta", self.delta.is_empty()),
            ("sigma", self.sigma.is_empty()),
            ("gamma", self.gamma.is_empty()),
            ("epsilon", self.epsilon.is_empty()),
        ] {
            if empty {
                return Err(HarnessError::Config(format!("grid '{name}' is empty")));
            }
        }
        match self.block {
            BlockPolicy::Explicit if self.b.is_none() => bad("explicit block policy needs B"),
            BlockPolicy::Explicit if self.t.is_empty() && self.l.is_none() => {
                bad("explicit block policy needs T or L")
            }
            BlockPolicy::NoiseOptimal if self.t.is_empty() => bad("noise-optimal block policy needs T"),
            _ if self.b == Some(0) || self.l == Some(0) || self.window == Some(0) => {
                bad("B, L and window must be positive")
            }
            _ if !(self.c > 0.0) || !(self.c_init > 0.0) => bad("C and c_init must be positive"),
            _ => Ok(()),
        }
    }

    /// All cells in sweep order, resolved or with the reason they are skipped.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        self.validate()?;
        let horizons: Vec<Option<usize>> = if self.t.is_empty() {
            vec![None]
        } else {
            self.t.iter().map(|&t| Some(t)).collect()
        };
        let mut out = Vec::new();
        for &p in &self.p {
            for &k in &self.k {
                for &delta in &self.delta {
                    for &sigma in &self.sigma {
                        for &gamma in &self.gamma {
                            for &t in &horizons {
                                for &epsilon in &self.epsilon {
                                    let index = out.len();
                                    let grid = GridPoint {
                                        p,
                                        k,
                                        delta,
                                        sigma,
                                        gamma,
                                        epsilon,
                                    };
                                    out.push(self.resolve(index, grid, t));
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn resolve(&self, index: usize, g: GridPoint, t: Option<usize>) -> Cell {
        let mut cell = Cell {
            index,
            grid: g,
            t: t.unwrap_or(0),
            b: 0,
            l: 0,
            window: 0,
            bounds: None,
            skip: None,
        };
        let params = SpikedParams {
            p: g.p,
            k: g.k,
            delta: g.delta,
            sigma: g.sigma,
            gamma: g.gamma,
            seed: 0,
        };
        if let Err(e) = params.validate() {
            cell.skip = Some(e.to_string());
            return cell;
        }
        if !(g.epsilon > 0.0) {
            cell.skip = Some(format!("epsilon must be positive, got {}", g.epsilon));
            return cell;
        }
        let inputs = BoundInputs::new(g.epsilon, g.delta, g.sigma, g.gamma, g.p, t.unwrap_or(0) as f64, self.c)
            .with_k(g.k)
            .with_c_init(self.c_init);
        let plan = match (self.block, t) {
            (BlockPolicy::Explicit, _) => Ok((self.b.expect("validated"), t, None)),
            (BlockPolicy::FromTheorem, Some(t)) => {
                let rep = check_assumptions(&BoundInputs { t: t as f64, ..inputs });
                Ok((rep.b_recommended as usize, Some(t), Some(rep)))
            }
            (BlockPolicy::FromTheorem, None) => {
                // start from a horizon where log T is meaningful
                let rep = resolve_horizon(&BoundInputs { t: 1e4, ..inputs });
                match (self.l, rep.l_recommended) {
                    (Some(l), _) => Ok((rep.b_recommended as usize, Some(rep.b_recommended as usize * l), Some(rep))),
                    (None, Some(l)) => Ok((rep.b_recommended as usize, Some(rep.b_recommended as usize * l as usize), Some(rep))),
                    (None, None) => Err(format!(
                        "recommended L undefined: {}",
                        rep.violations.join("; ")
                    )),
                }
            }
            (BlockPolicy::NoiseOptimal, Some(t)) => match noise_bound(g.p, (t as f64).max(2.0), 1.0, g.gamma, self.c) {
                Ok(nb) if nb.b_star.is_finite() => Ok(((nb.b_star.ceil() as usize).clamp(1, t), Some(t), None)),
                Ok(_) => Ok((t, Some(t), None)),
                Err(e) => Err(e.to_string()),
            },
            (BlockPolicy::NoiseOptimal, None) => unreachable!("validated"),
        };
        let (b, horizon, bounds) = match plan {
            Ok(x) => x,
            Err(reason) => {
                cell.skip = Some(reason);
                return cell;
            }
        };
        let l = match (self.l, horizon) {
            (Some(l), _) => l,
            (None, Some(t)) => t / b,
            (None, None) => unreachable!("validated"),
        };
        if l == 0 {
            cell.skip = Some(format!("block size B = {b} exceeds T = {}", horizon.unwrap_or(0)));
            return cell;
        }
        cell.b = b;
        cell.l = l;
        cell.t = b * l;
        cell.window = self.window.unwrap_or(cell.t).min(cell.t);
        cell.bounds = bounds;
        cell
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub p: usize,
    pub k: usize,
    pub delta: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

/// A grid point with its stream layout. `t = b · l` is the number of samples
/// actually consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub grid: GridPoint,
    pub t: usize,
    pub b: usize,
    pub l: usize,
    pub window: usize,
    /// The theorem's report when the block size came from it.
    pub bounds: Option<BoundReport>,
    pub skip: Option<String>,
}

impl Cell {
    /// Whether the theorem's assumptions hold for this cell as run: the report
    /// is feasible and at least the recommended number of blocks is used.
    pub fn guaranteed(&self) -> bool {
        self.skip.is_none()
            && self.bounds.as_ref().is_some_and(|r| {
                r.feasible && r.l_recommended.is_some_and(|l| self.l as u64 >= l)
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explicit_layout() {
        let spec = SweepSpec {
            block: BlockPolicy::Explicit,
            b: Some(100),
            t: vec![1050],
            ..Default::default()
        };
        let cells = spec.cells().unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!((cells[0].b, cells[0].l, cells[0].t), (100, 10, 1000));
        assert!(cells[0].bounds.is_none());
    }

    #[test]
    fn invalid_cells_are_skipped_not_fatal() {
        let spec = SweepSpec {
            block: BlockPolicy::Explicit,
            b: Some(100),
            t: vec![50, 1000],
            k: vec![3, 60],
            ..Default::default()
        };
        let cells = spec.cells().unwrap();
        assert_eq!(cells.len(), 4);
        assert!(cells[0].skip.as_ref().unwrap().contains("exceeds"));
        assert!(cells[1].skip.is_none());
        assert!(cells[2].skip.as_ref().unwrap().contains("k < p"));
    }

    #[test]
    fn theorem_layout_solves_horizon() {
        let spec = SweepSpec {
            p: vec![10],
            k: vec![2],
            ..Default::default()
        };
        let cell = &spec.cells().unwrap()[0];
        let rep = cell.bounds.as_ref().unwrap();
        assert_eq!(cell.b as u64, rep.b_recommended);
        assert_eq!(Some(cell.l as u64), rep.l_recommended);
        assert_eq!(cell.t as f64, rep.t);
        assert!(cell.guaranteed());
    }

    #[test]
    fn noise_optimal_block() {
        let spec = SweepSpec {
            block: BlockPolicy::NoiseOptimal,
            gamma: vec![0.0, 1e-4],
            t: vec![100_000],
            ..Default::default()
        };
        let cells = spec.cells().unwrap();
        assert_eq!((cells[0].b, cells[0].l), (100_000, 1));
        let want = (50.0 * 1e5f64.ln() / 1e-8).cbrt().ceil() as usize;
        assert_eq!(cells[1].b, want);
    }

    #[test]
    fn spec_level_errors() {
        let bad = SweepSpec {
            block: BlockPolicy::Explicit,
            ..Default::default()
        };
        assert!(matches!(bad.cells(), Err(HarnessError::Config(_))));
        assert!(SweepSpec::from_toml("nonsense = 1").is_err());
        let spec = SweepSpec::from_toml("p = [20]\ngamma = [0.0, 1e-5]\nblock = \"noise-optimal\"\nT = [5000]\nmethods = [\"npm\"]").unwrap();
        assert_eq!(spec.gamma, vec![0.0, 1e-5]);
        assert_eq!(spec.methods, vec![Method::Npm]);
    }
}
