//! Sweep execution and CSV persistence.
//!
//! Trials run on the rayon pool in chunks; each finished chunk is written in
//! (cell, trial, method) order and flushed, so a partial CSV is always a
//! prefix of the full one. Every trial's randomness is keyed on
//! `derive_seed(seed, [cell, trial])`, never on scheduling.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use spca_linalg::projection_distance;
use spca_model::rng::derive_seed;
use spca_model::{RotatingPath, SpikedParams};
use spca_npm::{run_npm_observed, NpmConfig, NpmRun, WindowCovariance};

use crate::spec::{Cell, Method, SweepSpec};
use crate::stats::median;
use crate::Result;

/// Exact CSV header.
pub const CSV_HEADER: &str =
    "p,k,delta,sigma,gamma,T,B,L,epsilon,seed,trial,method,final_error,status,wall_time_ms";

/// Oracle envelope slack: `oracle ≤ npm + ORACLE_SLACK`.
pub const ORACLE_SLACK: f64 = 1e-9;

/// Slack on `ε` for the median-error guarantee.
pub const GUARANTEE_SLACK: f64 = 0.05;

/// Smallest trial count for which the median-error guarantee is judged.
pub const GUARANTEE_MIN_TRIALS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub p: usize,
    pub k: usize,
    pub delta: f64,
    pub sigma: f64,
    pub gamma: f64,
    #[serde(rename = "T")]
    pub t: Option<usize>,
    #[serde(rename = "B")]
    pub b: Option<usize>,
    #[serde(rename = "L")]
    pub l: Option<usize>,
    pub epsilon: f64,
    /// Per-trial key: `run --seed <seed>` with the same cell replays the trial.
    pub seed: u64,
    pub trial: usize,
    pub method: Method,
    pub final_error: Option<f64>,
    /// `ok`, `skipped: …` or `error: …`.
    pub status: String,
    pub wall_time_ms: u64,
    #[serde(skip)]
    pub error_trace_path: Option<PathBuf>,
    #[serde(skip)]
    pub cell: usize,
}

/// Key of trial `trial` in cell `cell`.
pub fn trial_seed(seed: u64, cell: usize, trial: usize) -> u64 {
    derive_seed(seed, &[cell as u64, trial as u64])
}

/// Result of one single-pass run: NPM, the sliding-window covariance over
/// the last `window` samples, and the oracle.
#[derive(Debug, Clone)]
pub struct TrialRun {
    pub npm: NpmRun,
    pub npm_ms: u64,
    /// `d(window top-k, oracle)`.
    pub window_error: f64,
    pub window_ms: u64,
    /// `d(A_T, oracle)`: zero up to round-off.
    pub oracle_error: f64,
}

/// Runs one trial of `cell` keyed by `key`.
pub fn run_cell_trial(cell: &Cell, key: u64) -> Result<TrialRun> {
    let g = cell.grid;
    let params = SpikedParams {
        p: g.p,
        k: g.k,
        delta: g.delta,
        sigma: g.sigma,
        gamma: g.gamma,
        seed: key,
    };
    let mut cfg = NpmConfig::new(g.p, g.k, cell.b, cell.l, g.epsilon, key);
    cfg.allow_large_epsilon = true;
    let path = RotatingPath::new(params, cell.t)?;
    let mut win = WindowCovariance::new(g.p, cell.t - cell.window);
    let start = Instant::now();
    let npm = run_npm_observed(&params, &cfg, &path, &mut win)?;
    let npm_ms = start.elapsed().as_millis() as u64;
    let start = Instant::now();
    let window_error = projection_distance(&npm.final_oracle, &win.subspace(g.k)?)?;
    // the window shares the pass over the stream
    let window_ms = npm_ms + start.elapsed().as_millis() as u64;
    let oracle_error = projection_distance(&npm.final_factor, &npm.final_oracle)?;
    Ok(TrialRun {
        npm,
        npm_ms,
        window_error,
        window_ms,
        oracle_error,
    })
}

fn record(cell: &Cell, seed: u64, trial: usize, method: Method) -> TrialRecord {
    let g = cell.grid;
    let laid_out = cell.skip.is_none();
    TrialRecord {
        p: g.p,
        k: g.k,
        delta: g.delta,
        sigma: g.sigma,
        gamma: g.gamma,
        t: (laid_out || cell.t > 0).then_some(cell.t),
        b: laid_out.then_some(cell.b),
        l: laid_out.then_some(cell.l),
        epsilon: g.epsilon,
        seed,
        trial,
        method,
        final_error: None,
        status: String::new(),
        wall_time_ms: 0,
        error_trace_path: None,
        cell: cell.index,
    }
}

fn write_trace(dir: &Path, cell: usize, trial: usize, trace: &[f64]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("cell{cell:04}_trial{trial:04}.csv"));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["block", "error"])?;
    for (l, e) in trace.iter().enumerate() {
        w.write_record([(l + 1).to_string(), e.to_string()])?;
    }
    w.flush()?;
    Ok(path)
}

fn trial_records(spec: &SweepSpec, cell: &Cell, trial: usize) -> Vec<TrialRecord> {
    let key = trial_seed(spec.seed, cell.index, trial);
    let mut rows: Vec<TrialRecord> = spec
        .methods
        .iter()
        .map(|&m| record(cell, key, trial, m))
        .collect();
    if let Some(reason) = &cell.skip {
        for r in &mut rows {
            r.status = format!("skipped: {reason}");
        }
        return rows;
    }
    match run_cell_trial(cell, key) {
        Ok(run) => {
            let trace_path = spec
                .traces
                .as_deref()
                .map(|d| write_trace(d, cell.index, trial, &run.npm.error_trace));
            for r in &mut rows {
                let (err, ms) = match r.method {
                    Method::Npm => (*run.npm.error_trace.last().expect("L >= 1"), run.npm_ms),
                    Method::SlidingWindow => (run.window_error, run.window_ms),
                    Method::Oracle => (run.oracle_error, 0),
                };
                r.final_error = Some(err);
                r.wall_time_ms = ms;
                r.status = "ok".into();
                if r.method == Method::Npm {
                    match &trace_path {
                        Some(Ok(p)) => r.error_trace_path = Some(p.clone()),
                        Some(Err(e)) => r.status = format!("ok; trace not written: {e}"),
                        None => {}
                    }
                }
            }
        }
        Err(e) => {
            for r in &mut rows {
                r.status = format!("error: {e}");
            }
        }
    }
    rows
}

/// Streams records to `sink` (header first) as chunks complete.
pub struct CsvSink<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        inner.write_record(CSV_HEADER.split(','))?;
        inner.flush()?;
        Ok(CsvSink { inner })
    }

    pub fn write(&mut self, rows: &[TrialRecord]) -> Result<()> {
        for r in rows {
            self.inner.serialize(r)?;
        }
        self.inner.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub cells: Vec<Cell>,
    pub records: Vec<TrialRecord>,
}

/// Runs every (cell, trial) of `spec`, writing rows to `sink` as they finish.
pub fn run_sweep<W: Write>(spec: &SweepSpec, mut sink: Option<&mut CsvSink<W>>) -> Result<SweepOutcome> {
    let cells = spec.cells()?;
    for c in cells.iter().filter(|c| c.skip.is_some()) {
        eprintln!(
            "cell {} skipped: {}",
            c.index,
            c.skip.as_deref().unwrap_or_default()
        );
    }
    let jobs: Vec<(usize, usize)> = cells
        .iter()
        .flat_map(|c| (0..spec.trials).map(move |t| (c.index, t)))
        .collect();
    let chunk = 4 * rayon::current_num_threads().max(1);
    let mut records = Vec::with_capacity(jobs.len() * spec.methods.len());
    for part in jobs.chunks(chunk) {
        let done: Vec<Vec<TrialRecord>> = part
            .par_iter()
            .map(|&(c, t)| trial_records(spec, &cells[c], t))
            .collect();
        let rows: Vec<TrialRecord> = done.into_iter().flatten().collect();
        if let Some(s) = sink.as_deref_mut() {
            s.write(&rows)?;
        }
        records.extend(rows);
    }
    Ok(SweepOutcome { cells, records })
}

/// Invariant violations of a finished sweep, as human-readable lines.
pub fn check_invariants(out: &SweepOutcome) -> Vec<String> {
    let mut v = Vec::new();
    let mut by_trial: BTreeMap<(usize, usize), BTreeMap<Method, f64>> = BTreeMap::new();
    for r in &out.records {
        if let Some(e) = r.final_error {
            if !(0.0..=1.0).contains(&e) {
                v.push(format!(
                    "cell {} trial {} {:?}: final_error {e} outside [0, 1]",
                    r.cell, r.trial, r.method
                ));
            }
            by_trial.entry((r.cell, r.trial)).or_default().insert(r.method, e);
        }
    }
    for ((cell, trial), m) in &by_trial {
        if let (Some(o), Some(n)) = (m.get(&Method::Oracle), m.get(&Method::Npm)) {
            if *o > n + ORACLE_SLACK {
                v.push(format!("cell {cell} trial {trial}: oracle {o:e} above npm {n:e}"));
            }
        }
    }
    for cell in out.cells.iter().filter(|c| c.guaranteed()) {
        let errs: Vec<f64> = by_trial
            .range((cell.index, 0)..(cell.index + 1, 0))
            .filter_map(|(_, m)| m.get(&Method::Npm).copied())
            .collect();
        if errs.len() < GUARANTEE_MIN_TRIALS {
            continue;
        }
        let med = median(&errs).unwrap_or(f64::NAN);
        let cap = cell.grid.epsilon + GUARANTEE_SLACK;
        if !(med <= cap) {
            v.push(format!(
                "cell {}: assumptions hold but median npm error {med:.4} > epsilon + {GUARANTEE_SLACK} = {cap:.4}",
                cell.index
            ));
        }
    }
    v
}

/// Median final error per (cell, method) over successful trials.
pub fn medians(out: &SweepOutcome) -> BTreeMap<(usize, Method), f64> {
    let mut groups: BTreeMap<(usize, Method), Vec<f64>> = BTreeMap::new();
    for r in &out.records {
        if let Some(e) = r.final_error {
            groups.entry((r.cell, r.method)).or_default().push(e);
        }
    }
    groups
        .into_iter()
        .filter_map(|(key, es)| median(&es).map(|m| (key, m)))
        .collect()
}
