use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use spca_analysis::{check_assumptions, resolve_horizon, BoundInputs, DEFAULT_INIT_CONSTANT};
use spca_linalg::projection_distance;
use spca_model::io::{read_path_csv, write_path_csv, PathHeader};
use spca_model::rng::{stream, Purpose};
use spca_model::{generate_rotating_path, PathSource, Sampler, SpikedParams};
use spca_npm::{run_npm_observed, NpmConfig, WindowCovariance};
use spca_verify::{run_suites, LemmaId, SuiteConfig};
use streampca::{
    check_invariants, fit_constant_c, medians, run_cell_trial, run_sweep, BlockPolicy,
    CalibrationSpec, Cell, CsvSink, GridPoint, HarnessError, SweepSpec,
};

const EXIT_VIOLATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "streampca", version, about = "Non-stationary streaming PCA experiments")]
struct Cli {
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML config with optional [sweep] and [calibrate] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit a rotating subspace path (or observations drawn along it) as CSV.
    Generate(GenerateArgs),
    /// Single noisy-power-method run; prints the per-block error trace.
    Run(RunArgs),
    /// Execute a sweep and write one CSV row per (cell, trial, method).
    Sweep(SweepArgs),
    /// Evaluate the theorem's sizing and assumptions.
    Bounds(BoundsArgs),
    /// Randomised checks of the perturbation lemmas.
    Verify(VerifyArgs),
    /// Fit the noise-bound constant C by Monte-Carlo.
    Calibrate(CalibrateArgs),
}

#[derive(Args, Clone, Copy)]
struct ModelArgs {
    #[arg(long, default_value_t = 50)]
    p: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long = "T")]
    t: usize,
    /// Emit observations `t,x1..xp` instead of factors; block `l` of size B
    /// uses the same sample stream as `run`.
    #[arg(long)]
    samples: bool,
    #[arg(long = "B")]
    b: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long = "B")]
    b: usize,
    #[arg(long = "L")]
    l: usize,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Sliding-window length for the baseline (default: whole stream).
    #[arg(long)]
    window: Option<usize>,
    /// Run on a path file written by `generate` instead of a fresh path.
    #[arg(long)]
    path: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    block: Option<PolicyArg>,
    #[arg(long = "B")]
    b: Option<usize>,
    #[arg(long = "L")]
    l: Option<usize>,
    #[arg(long = "C")]
    c: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Explicit,
    FromTheorem,
    NoiseOptimal,
}

impl From<PolicyArg> for BlockPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Explicit => BlockPolicy::Explicit,
            PolicyArg::FromTheorem => BlockPolicy::FromTheorem,
            PolicyArg::NoiseOptimal => BlockPolicy::NoiseOptimal,
        }
    }
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long = "T", default_value_t = 1e6)]
    t: f64,
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = DEFAULT_INIT_CONSTANT)]
    c_init: f64,
    /// Solve T = B·L instead of using --T as given.
    #[arg(long)]
    resolve: bool,
    /// Print only the JSON object.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// pm_stat, lem1, lem2, dk, sinsum, weyl, norm or all (repeatable).
    #[arg(long, default_value = "all")]
    lemma: Vec<String>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<usize>>,
    #[arg(long = "B", value_delimiter = ',')]
    b: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    #[arg(long)]
    blocks: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    out: Option<PathBuf>,
    threads: Option<usize>,
    sweep: Option<SweepSpec>,
    calibrate: Option<CalibrationSpec>,
}

enum Failure {
    Config(String),
    Violation(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn config_err<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Config(e.to_string())
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, Failure> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn params(m: &ModelArgs, seed: u64) -> SpikedParams {
    SpikedParams {
        p: m.p,
        k: m.k,
        delta: m.delta,
        sigma: m.sigma,
        gamma: m.gamma,
        seed,
    }
}

fn generate(a: &GenerateArgs, seed: u64, out: Option<&Path>) -> Result<(), Failure> {
    let prm = params(&a.model, seed);
    let path = generate_rotating_path(&prm, a.t).map_err(config_err)?;
    let mut w = output(out)?;
    if !a.samples {
        let header = PathHeader {
            p: prm.p,
            k: prm.k,
            t: a.t,
            delta: prm.delta,
            gamma: prm.gamma,
            sigma: prm.sigma,
            seed,
        };
        write_path_csv(&mut w, &header, &path).map_err(config_err)?;
        return w.flush().map_err(config_err);
    }
    let b = a.b.unwrap_or(a.t).max(1);
    let mut csv = csv::Writer::from_writer(w);
    let mut head = vec!["t".to_string()];
    head.extend((1..=prm.p).map(|i| format!("x{i}")));
    csv.write_record(&head).map_err(config_err)?;
    let mut sampler = Sampler::new(prm.k, prm.sigma);
    let mut x = vec![0.0; prm.p];
    let mut rec = Vec::with_capacity(prm.p + 1);
    for (l, seg) in path.factors.chunks(b).enumerate() {
        let mut rng = stream(seed, Purpose::Sample, l as u64);
        for (i, a) in seg.iter().enumerate() {
            sampler.draw(a, &mut rng, &mut x);
            rec.clear();
            rec.push((l * b + i).to_string());
            rec.extend(x.iter().map(|v| v.to_string()));
            csv.write_record(&rec).map_err(config_err)?;
        }
    }
    csv.flush().map_err(config_err)
}

fn run(a: &RunArgs, seed: u64, out: Option<&Path>) -> Result<(), Failure> {
    let mut w = output(out)?;
    let (trace, window_err, oracle_err) = if let Some(file) = &a.path {
        let f = File::open(file).map_err(|e| Failure::Config(format!("{}: {e}", file.display())))?;
        let (h, path) = read_path_csv(f).map_err(config_err)?;
        let prm = SpikedParams {
            p: h.p,
            k: h.k,
            delta: h.delta,
            sigma: h.sigma,
            gamma: h.gamma,
            seed,
        };
        let t = a.b * a.l;
        let mut cfg = NpmConfig::new(h.p, h.k, a.b, a.l, a.epsilon, seed);
        cfg.allow_large_epsilon = true;
        let window = a.window.unwrap_or(t).min(t);
        let mut win = WindowCovariance::new(h.p, t - window);
        let r = run_npm_observed(&prm, &cfg, &path as &dyn PathSource, &mut win).map_err(config_err)?;
        let we = projection_distance(&r.final_oracle, &win.subspace(h.k).map_err(config_err)?)
            .map_err(config_err)?;
        let oe = projection_distance(&r.final_factor, &r.final_oracle).map_err(config_err)?;
        (r.error_trace, we, oe)
    } else {
        let m = a.model;
        let t = a.b * a.l;
        let cell = Cell {
            index: 0,
            grid: GridPoint {
                p: m.p,
                k: m.k,
                delta: m.delta,
                sigma: m.sigma,
                gamma: m.gamma,
                epsilon: a.epsilon,
            },
            t,
            b: a.b,
            l: a.l,
            window: a.window.unwrap_or(t).min(t),
            bounds: None,
            skip: None,
        };
        let r = run_cell_trial(&cell, seed)?;
        (r.npm.error_trace, r.window_error, r.oracle_error)
    };
    writeln!(w, "block,error").map_err(config_err)?;
    for (l, e) in trace.iter().enumerate() {
        writeln!(w, "{},{e}", l + 1).map_err(config_err)?;
    }
    w.flush().map_err(config_err)?;
    eprintln!(
        "npm {:.6e}  sliding_window {:.6e}  oracle {:.3e}",
        trace.last().copied().unwrap_or(f64::NAN),
        window_err,
        oracle_err
    );
    Ok(())
}

fn sweep(a: &SweepArgs, cfg: &ConfigFile, cli: &Cli) -> Result<(), Failure> {
    let mut spec = cfg.sweep.clone().unwrap_or_default();
    if let Some(s) = cli.seed.or(cfg.seed) {
        spec.seed = s;
    }
    if let Some(t) = a.trials {
        spec.trials = t;
    }
    if let Some(b) = a.block {
        spec.block = b.into();
    }
    if a.b.is_some() {
        spec.b = a.b;
    }
    if a.l.is_some() {
        spec.l = a.l;
    }
    if let Some(c) = a.c {
        spec.c = c;
    }
    let out = cli.out.clone().or_else(|| cfg.out.clone()).or_else(|| spec.out.clone());
    spec.validate()?;
    let mut sink = CsvSink::new(output(out.as_deref())?)?;
    let outcome = run_sweep(&spec, Some(&mut sink))?;
    for ((cell, method), m) in medians(&outcome) {
        eprintln!("cell {cell:>3} {method:<14?} median final_error {m:.6e}");
    }
    let bad = check_invariants(&outcome);
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::Violation(bad.join("\n")))
    }
}

fn bounds(a: &BoundsArgs, out: Option<&Path>) -> Result<(), Failure> {
    let m = a.model;
    let inp = BoundInputs::new(a.epsilon, m.delta, m.sigma, m.gamma, m.p, a.t, a.c)
        .with_k(m.k)
        .with_c_init(a.c_init);
    let rep = if a.resolve {
        resolve_horizon(&inp)
    } else {
        check_assumptions(&inp)
    };
    let mut w = output(out)?;
    if !a.json {
        write!(w, "{rep}").map_err(config_err)?;
    }
    writeln!(w, "{}", serde_json::to_string_pretty(&rep).map_err(config_err)?).map_err(config_err)?;
    w.flush().map_err(config_err)
}

fn verify(a: &VerifyArgs, seed: u64, out: Option<&Path>) -> Result<(), Failure> {
    let mut ids = Vec::new();
    for name in &a.lemma {
        if name.eq_ignore_ascii_case("all") {
            ids.extend(LemmaId::ALL);
        } else {
            ids.push(name.parse::<LemmaId>().map_err(Failure::Config)?);
        }
    }
    ids.dedup();
    let report = run_suites(&ids, &SuiteConfig::new(a.trials, seed)).map_err(|e| Failure::Violation(e.to_string()))?;
    let mut w = output(out)?;
    writeln!(w, "{}", serde_json::to_string_pretty(&report).map_err(config_err)?).map_err(config_err)?;
    w.flush().map_err(config_err)?;
    for s in &report.suites {
        eprintln!(
            "{:<12} trials {:>6}  violations {:>5}  worst margin {:+.3e}  rejected {:.1}%",
            s.lemma_id.name(),
            s.trials,
            s.violations,
            s.worst_margin,
            100.0 * s.rejection_rate
        );
    }
    if report.total_violations > 0 {
        Err(Failure::Violation(format!("{} violations", report.total_violations)))
    } else {
        Ok(())
    }
}

fn calibrate(a: &CalibrateArgs, cfg: &ConfigFile, cli: &Cli) -> Result<(), Failure> {
    let mut spec = cfg.calibrate.clone().unwrap_or_default();
    if let Some(s) = cli.seed.or(cfg.seed) {
        spec.seed = s;
    }
    if let Some(p) = &a.p {
        spec.p = p.clone();
    }
    if let Some(b) = &a.b {
        spec.b = b.clone();
    }
    if let Some(g) = &a.gamma {
        spec.gamma = g.clone();
    }
    if let Some(n) = a.blocks {
        spec.blocks = n;
    }
    let cal = fit_constant_c(&spec)?;
    for s in &cal.skipped {
        eprintln!("skipped: {s}");
    }
    let out = cli.out.clone().or_else(|| cfg.out.clone());
    let mut w = output(out.as_deref())?;
    writeln!(w, "{}", serde_json::to_string_pretty(&cal).map_err(config_err)?).map_err(config_err)?;
    w.flush().map_err(config_err)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(cli.config.as_deref()).and_then(|cfg| {
        if let Some(n) = cli.threads.or(cfg.threads) {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(config_err)?;
        }
        let seed = cli.seed.or(cfg.seed).unwrap_or(0);
        let out = cli.out.clone().or_else(|| cfg.out.clone());
        match &cli.command {
            Command::Generate(a) => generate(a, seed, out.as_deref()),
            Command::Run(a) => run(a, seed, out.as_deref()),
            Command::Sweep(a) => sweep(a, &cfg, &cli),
            Command::Bounds(a) => bounds(a, out.as_deref()),
            Command::Verify(a) => verify(a, seed, out.as_deref()),
            Command::Calibrate(a) => calibrate(a, &cfg, &cli),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Violation(m)) => {
            eprintln!("{m}");
            ExitCode::from(EXIT_VIOLATION)
        }
    }
}
