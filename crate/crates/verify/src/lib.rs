//! Numeric verification of the perturbation results the noisy-power-method
//! analysis rests on.
//!
//! Each suite draws randomized admissible instances (n ≤ 20), evaluates the
//! claimed inequality and counts violations beyond [`SLACK`]. Instances that
//! miss a hypothesis are redrawn and counted as rejections; a suite whose
//! sampler rejects more than 99% of its draws errors out instead of
//! reporting.

pub mod checks;
pub mod instances;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use spca_model::rng::{derive_seed, stream, Purpose, Rng as StreamRng};
use thiserror::Error;

pub use checks::{
    construct_nbar, verify_davis_kahan, verify_lemma1, verify_lemma2, verify_norm_ineq,
    verify_pm_stat, verify_sin_sum, verify_weyl, DkOutcome, LemmaOutcome, Nbar, NbarCase, Outcome,
    sin_sum_boundary, SinSumCase, SinSumOutcome, CONTAINMENT_RTOL, SIN_SUM_CAP,
};

/// An inequality counts as violated when it fails by more than this.
pub const SLACK: f64 = 1e-8;

/// Suites fail loudly above this rejection rate.
pub const MAX_REJECTION_RATE: f64 = 0.99;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("hypothesis unsatisfied: {0}")]
    HypothesisUnsatisfied(String),
    #[error("spectral gap too small: {gap:e}")]
    GapTooSmall { gap: f64 },
    #[error("construction failed: containment residual {residual:e} (scale {scale:e})")]
    ConstructionFailed { residual: f64, scale: f64 },
    #[error("{lemma}: sampler rejected {rate:.4} of draws")]
    SamplerRejection { lemma: LemmaId, rate: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Linalg(#[from] spca_linalg::LinalgError),
    #[error(transparent)]
    Analysis(#[from] spca_analysis::AnalysisError),
}

impl VerifyError {
    /// Errors that mean "draw another instance".
    fn is_rejection(&self) -> bool {
        matches!(
            self,
            VerifyError::PreconditionViolated(_)
                | VerifyError::HypothesisUnsatisfied(_)
                | VerifyError::GapTooSmall { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, VerifyError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LemmaId {
    PmStat,
    Lem1,
    Lem2,
    DavisKahan,
    SinSum,
    Weyl,
    NormIneq,
}

impl LemmaId {
    pub const ALL: [LemmaId; 7] = [
        LemmaId::PmStat,
        LemmaId::Lem1,
        LemmaId::Lem2,
        LemmaId::DavisKahan,
        LemmaId::SinSum,
        LemmaId::Weyl,
        LemmaId::NormIneq,
    ];

    fn tag(self) -> u64 {
        self as u64 + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            LemmaId::PmStat => "PM_STAT",
            LemmaId::Lem1 => "LEM1",
            LemmaId::Lem2 => "LEM2",
            LemmaId::DavisKahan => "DAVIS_KAHAN",
            LemmaId::SinSum => "SIN_SUM",
            LemmaId::Weyl => "WEYL",
            LemmaId::NormIneq => "NORM_INEQ",
        }
    }
}

impl fmt::Display for LemmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LemmaId {
    type Err = String;

    /// Accepts the CLI spellings (`pm_stat`, `lem1`, `lem2`, `dk`, `sinsum`,
    /// `weyl`, `norm`) and the report names.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "pm_stat" | "pmstat" => LemmaId::PmStat,
            "lem1" => LemmaId::Lem1,
            "lem2" => LemmaId::Lem2,
            "dk" | "davis_kahan" => LemmaId::DavisKahan,
            "sinsum" | "sin_sum" => LemmaId::SinSum,
            "weyl" => LemmaId::Weyl,
            "norm" | "norm_ineq" => LemmaId::NormIneq,
            other => return Err(format!("unknown lemma '{other}'")),
        })
    }
}

/// A second inequality evaluated on the same instances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Supplementary {
    pub name: String,
    pub trials: usize,
    pub violations: usize,
    pub worst_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub lemma_id: LemmaId,
    /// Admissible instances evaluated.
    pub trials: usize,
    pub violations: usize,
    /// Smallest `rhs − lhs` seen (negative = violated).
    pub worst_margin: f64,
    /// Draws discarded for missing a hypothesis.
    pub rejected: usize,
    pub rejection_rate: f64,
    /// Instances where the verifier itself failed (counted as violations).
    pub errors: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub supplementary: Option<Supplementary>,
    /// Largest observed `Σ sin²θ_t / a` (SIN_SUM only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitted_constant: Option<f64>,
    /// Instances on each side of the case boundary (SIN_SUM only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case_counts: Option<[usize; 2]>,
    pub elapsed_ms: u64,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub trials: usize,
    pub seed: u64,
    /// Largest dimension drawn.
    pub max_n: usize,
    /// Draws per trial before the trial is abandoned.
    pub max_attempts: usize,
    /// Pins ε in the LEM1/LEM2 samplers.
    pub epsilon: Option<f64>,
    /// Largest horizon in the SIN_SUM sampler.
    pub max_t: usize,
}

impl SuiteConfig {
    pub fn new(trials: usize, seed: u64) -> Self {
        SuiteConfig {
            trials,
            seed,
            max_n: 20,
            max_attempts: 1000,
            epsilon: None,
            max_t: 100_000,
        }
    }
}

/// Per-trial result: primary margin, optional secondary margin, extra value.
#[derive(Debug, Clone, Copy)]
struct Eval {
    margin: f64,
    secondary: Option<f64>,
    extra: Option<(f64, SinSumCase)>,
}

enum TrialResult {
    Done { eval: Eval, rejected: usize },
    Failed { rejected: usize },
    Exhausted { rejected: usize },
}

fn evaluate(id: LemmaId, cfg: &SuiteConfig, rng: &mut StreamRng) -> Option<Result<Eval>> {
    use instances::*;
    let plain = |margin: f64| Eval {
        margin,
        secondary: None,
        extra: None,
    };
    Some(match id {
        LemmaId::PmStat => {
            let inst = pm_stat_instance(rng, cfg.max_n);
            verify_pm_stat(&inst.m, &inst.n).map(|o| plain(o.margin()))
        }
        LemmaId::Lem1 => {
            let prm = lemma_params(rng, cfg.max_n, cfg.epsilon, false)?;
            let inst = lemma1_instance(rng, prm);
            verify_lemma1(&inst.m, &inst.e, &inst.frame, prm.epsilon, prm.eta).map(|(o, _)| plain(o.margin()))
        }
        LemmaId::Lem2 => {
            let prm = lemma_params(rng, cfg.max_n, cfg.epsilon, true)?;
            let inst = lemma2_instance(rng, prm);
            verify_lemma2(&inst.m, &inst.e, &inst.frame, prm.epsilon, prm.eta).map(|o| plain(o.margin()))
        }
        LemmaId::DavisKahan => {
            let inst = dk_instance(rng, cfg.max_n);
            verify_davis_kahan(&inst.a, &inst.b, inst.k).map(|o| Eval {
                margin: o.literal.margin(),
                secondary: o.corrected.map(|c| c.margin()),
                extra: None,
            })
        }
        LemmaId::SinSum => {
            let p = sin_sum_params(rng, cfg.max_t)?;
            verify_sin_sum(p.delta, p.gamma, p.sigma, p.t).map(|o| Eval {
                margin: o.margin(),
                secondary: None,
                extra: Some((if o.a > 0.0 { o.sum / o.a } else { 0.0 }, o.case)),
            })
        }
        LemmaId::Weyl => {
            let (a, b) = weyl_instance(rng, cfg.max_n);
            verify_weyl(&a, &b).map(|o| plain(o.margin()))
        }
        LemmaId::NormIneq => {
            let (m, n) = norm_ineq_instance(rng, cfg.max_n);
            verify_norm_ineq(&m, &n).map(|(u, l)| plain(u.margin().min(l.margin())))
        }
    })
}

fn run_trial(id: LemmaId, cfg: &SuiteConfig, trial: usize) -> TrialResult {
    let key = derive_seed(cfg.seed, &[id.tag()]);
    let mut rng = stream(key, Purpose::Instance, trial as u64);
    let mut rejected = 0;
    for _ in 0..cfg.max_attempts {
        match evaluate(id, cfg, &mut rng) {
            None => rejected += 1,
            Some(Ok(eval)) => return TrialResult::Done { eval, rejected },
            Some(Err(e)) if e.is_rejection() => rejected += 1,
            Some(Err(_)) => return TrialResult::Failed { rejected },
        }
    }
    TrialResult::Exhausted { rejected }
}

/// Runs `cfg.trials` admissible instances of one suite (in parallel, results
/// independent of scheduling).
pub fn run_suite(id: LemmaId, cfg: &SuiteConfig) -> Result<LemmaReport> {
    let start = Instant::now();
    let results: Vec<TrialResult> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| run_trial(id, cfg, i))
        .collect();

    let mut trials = 0;
    let mut violations = 0;
    let mut rejected = 0;
    let mut errors = 0;
    let mut worst = f64::INFINITY;
    let mut supp = (0usize, 0usize, f64::INFINITY);
    let mut fitted = f64::NEG_INFINITY;
    let mut cases = [0usize; 2];
    for r in &results {
        match *r {
            TrialResult::Done { eval, rejected: rj } => {
                rejected += rj;
                trials += 1;
                worst = worst.min(eval.margin);
                if eval.margin < -SLACK {
                    violations += 1;
                }
                if let Some(m) = eval.secondary {
                    supp.0 += 1;
                    supp.2 = supp.2.min(m);
                    if m < -SLACK {
                        supp.1 += 1;
                    }
                }
                if let Some((ratio, case)) = eval.extra {
                    fitted = fitted.max(ratio);
                    cases[(case == SinSumCase::Above) as usize] += 1;
                }
            }
            TrialResult::Failed { rejected: rj } => {
                rejected += rj;
                errors += 1;
            }
            TrialResult::Exhausted { rejected: rj } => rejected += rj,
        }
    }
    let draws = rejected + trials + errors;
    let rate = if draws == 0 { 0.0 } else { rejected as f64 / draws as f64 };
    if rate > MAX_REJECTION_RATE {
        return Err(VerifyError::SamplerRejection { lemma: id, rate });
    }
    Ok(LemmaReport {
        lemma_id: id,
        trials,
        violations: violations + errors,
        worst_margin: worst,
        rejected,
        rejection_rate: rate,
        errors,
        supplementary: (id == LemmaId::DavisKahan).then(|| Supplementary {
            name: "norm(B)/(gap - norm(B))".into(),
            trials: supp.0,
            violations: supp.1,
            worst_margin: supp.2,
        }),
        fitted_constant: (id == LemmaId::SinSum).then_some(fitted),
        case_counts: (id == LemmaId::SinSum).then_some(cases),
        elapsed_ms: start.elapsed().as_millis() as u64,
    })
}

/// All suites in [`LemmaId::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub slack: f64,
    pub suites: Vec<LemmaReport>,
    pub total_violations: usize,
}

pub fn run_suites(ids: &[LemmaId], cfg: &SuiteConfig) -> Result<VerifyReport> {
    let suites = ids
        .iter()
        .map(|&id| run_suite(id, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(VerifyReport {
        seed: cfg.seed,
        slack: SLACK,
        total_violations: suites.iter().map(|s| s.violations).sum(),
        suites,
    })
}
