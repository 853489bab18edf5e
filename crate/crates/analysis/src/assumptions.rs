use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lower::lower_bound_s;
use crate::noise::noise_bound;

/// Constant `c` of the random-initialisation bound `c√p/(√p−√(k−1))`.
///
/// Monte-Carlo fits of the 99th percentile at p = 50 land near 900 for
/// Gaussian initialisation, which is what this default covers.
pub const DEFAULT_INIT_CONSTANT: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub epsilon: f64,
    pub delta: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub p: usize,
    pub k: usize,
    /// Horizon `T` (real so the stationary `log T = 1` example is expressible).
    #[serde(rename = "T")]
    pub t: f64,
    /// Noise-bound constant `C`.
    #[serde(rename = "C")]
    pub c: f64,
    /// Random-initialisation constant used for `L`.
    pub c_init: f64,
}

impl BoundInputs {
    pub fn new(epsilon: f64, delta: f64, sigma: f64, gamma: f64, p: usize, t: f64, c: f64) -> Self {
        BoundInputs {
            epsilon,
            delta,
            sigma,
            gamma,
            p,
            k: 1,
            t,
            c,
            c_init: DEFAULT_INIT_CONSTANT,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_c_init(mut self, c_init: f64) -> Self {
        self.c_init = c_init;
        self
    }
}

/// Signed slack of every checked inequality (positive = satisfied).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Margins {
    /// `Δ − (√(Cp log T/B) + Bγ/2)`
    pub a1: f64,
    /// `φ − 1`
    pub a2: Option<f64>,
    /// A.3 left side minus right side
    pub a3: Option<f64>,
    /// `ε − η/32`
    pub a4: Option<f64>,
    /// `ε − 16(Cp log T)^{1/3}γ^{1/3}/δ`
    pub eps_lower: f64,
    /// `1/4 − ε`
    pub eps_upper: f64,
    /// `δ − σ²/8`
    pub gap_vs_noise: f64,
    /// `δ − Bγ` (η is defined only when positive)
    pub drift_budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub s_lower: f64,
    /// `None` when `γ = 0` (no crossover).
    pub t_star: Option<f64>,
    pub noise_bound: f64,
    #[serde(rename = "B")]
    pub b_recommended: u64,
    /// `None` when φ is undefined or ≤ 1.
    #[serde(rename = "L")]
    pub l_recommended: Option<u64>,
    #[serde(rename = "Delta")]
    pub delta_cap: f64,
    /// `None` when `Bγ ≥ δ`.
    pub eta: Option<f64>,
    /// `None` when η is undefined or `ε + η ≥ 1`.
    pub phi: Option<f64>,
    pub a1: bool,
    pub a2: bool,
    pub a3: bool,
    pub a4: bool,
    pub margins: Margins,
    #[serde(rename = "C")]
    pub c_used: f64,
    pub c_init: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub feasible: bool,
    /// Names of violated inequalities and undefined quantities.
    pub violations: Vec<String>,
}

/// φ for the spiked specialisation `s_k = δ + σ²`, `s_{k+1} = σ²`.
fn phi_of(delta: f64, sigma: f64, cap: f64, e: f64) -> Option<f64> {
    if !(e < 1.0) {
        return None;
    }
    let s2 = sigma * sigma;
    let root = (1.0 - e * e).sqrt();
    Some(((delta + s2) - cap / root) / (s2 + cap) * (1.0 - e * e))
}

fn a3_margin(delta: f64, sigma: f64, epsilon: f64, e: f64) -> Option<f64> {
    if !(e < 1.0) {
        return None;
    }
    let s2 = sigma * sigma;
    let lhs = (s2 + 0.75 * delta) / (s2 + 0.25 * delta);
    let rhs = e * (1.0 - epsilon * epsilon).sqrt() / (epsilon * (1.0 - e * e).sqrt());
    Some(lhs - rhs)
}

/// A.2–A.4 for a single instance with known `η` (no block-size sizing).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InstanceConditions {
    #[serde(rename = "Delta")]
    pub delta_cap: f64,
    pub phi: Option<f64>,
    pub a2: bool,
    pub a3: bool,
    pub a4: bool,
}

impl InstanceConditions {
    pub fn all(&self) -> bool {
        self.a2 && self.a3 && self.a4
    }
}

/// Evaluates A.2–A.4 at `(ε, η)` for the spectrum `s_k = δ + σ²`, `s_{k+1} = σ²`,
/// with `Δ = εδ/4`.
pub fn instance_conditions(epsilon: f64, eta: f64, delta: f64, sigma: f64) -> InstanceConditions {
    let cap = epsilon * delta / 4.0;
    let e = epsilon + eta;
    let phi = phi_of(delta, sigma, cap, e);
    InstanceConditions {
        delta_cap: cap,
        phi,
        a2: phi.is_some_and(|f| f > 1.0),
        a3: a3_margin(delta, sigma, epsilon, e).is_some_and(|m| m >= 0.0),
        a4: epsilon > eta / 32.0,
    }
}

/// Smallest integer `L > log(c√p/(√p−√(k−1)))/log φ`, at least 1.
pub fn iterations_for(phi: f64, p: usize, k: usize, c_init: f64) -> Option<u64> {
    if !(phi > 1.0) || k == 0 || k > p {
        return None;
    }
    let sp = (p as f64).sqrt();
    let ratio = c_init * sp / (sp - ((k - 1) as f64).sqrt());
    let x = ratio.ln() / phi.ln();
    if !x.is_finite() {
        return None;
    }
    Some(if x < 0.0 { 1 } else { x.floor() as u64 + 1 })
}

/// Evaluates block size, Δ, η, φ, assumptions A.1–A.4 and the theorem's
/// preconditions. Never fails: infeasibility is reported in the result.
pub fn check_assumptions(inp: &BoundInputs) -> BoundReport {
    let BoundInputs {
        epsilon,
        delta,
        sigma,
        gamma,
        p,
        k,
        t,
        c,
        c_init,
    } = *inp;
    let mut violations = Vec::new();

    let log_t = t.ln();
    let b_real = 64.0 * c * p as f64 * log_t / (epsilon * epsilon * delta * delta);
    let b = if b_real.is_finite() && b_real >= 1.0 {
        b_real.ceil() as u64
    } else {
        1
    };
    let bf = b as f64;
    let cap = epsilon * delta / 4.0;

    let (s_lower, t_star) = match lower_bound_s(delta, gamma, sigma, t.max(1.0)) {
        Ok(lb) => (lb.s, lb.t_star.is_finite().then_some(lb.t_star)),
        Err(e) => {
            violations.push(format!("lower bound undefined: {e}"));
            (f64::NAN, None)
        }
    };
    let nb = noise_bound(p.max(1), t.max(2.0), bf, gamma.max(0.0), c.max(0.0))
        .map(|n| n.value)
        .unwrap_or(f64::NAN);

    let drift_budget = delta - bf * gamma;
    let eta = (drift_budget > 0.0).then(|| bf * gamma / drift_budget);
    if eta.is_none() {
        violations.push(format!("eta undefined: B*gamma = {:.6e} >= delta", bf * gamma));
    }
    let e = eta.map(|h| epsilon + h);
    let phi = e.and_then(|e| phi_of(delta, sigma, cap, e));
    if eta.is_some() && phi.is_none() {
        violations.push("phi undefined: epsilon + eta >= 1".into());
    }
    let a3m = e.and_then(|e| a3_margin(delta, sigma, epsilon, e));
    let a4m = eta.map(|h| epsilon - h / 32.0);

    let eps_floor = 16.0 * (c * p as f64 * log_t).cbrt() * gamma.cbrt() / delta;
    let margins = Margins {
        a1: cap - nb,
        a2: phi.map(|f| f - 1.0),
        a3: a3m,
        a4: a4m,
        eps_lower: epsilon - eps_floor,
        eps_upper: 0.25 - epsilon,
        gap_vs_noise: delta - sigma * sigma / 8.0,
        drift_budget,
    };

    let a1 = margins.a1 >= 0.0;
    let a2 = margins.a2.is_some_and(|m| m > 0.0);
    let a3 = margins.a3.is_some_and(|m| m >= 0.0);
    let a4 = margins.a4.is_some_and(|m| m > 0.0);
    for (ok, name) in [
        (a1, "A.1: noise bound <= Delta"),
        (a2, "A.2: phi > 1"),
        (a3, "A.3: singular-value ratio condition"),
        (a4, "A.4: epsilon > eta/32"),
    ] {
        if !ok {
            violations.push(name.to_string());
        }
    }
    if margins.eps_lower < 0.0 {
        violations.push(format!(
            "precondition: 16 (C p log T)^(1/3) gamma^(1/3) / delta = {eps_floor:.6} <= epsilon"
        ));
    }
    if margins.eps_upper < 0.0 {
        violations.push("precondition: epsilon <= 1/4".into());
    }
    if margins.gap_vs_noise < 0.0 {
        violations.push("precondition: delta >= sigma^2/8".into());
    }

    let l_recommended = phi.and_then(|f| iterations_for(f, p, k, c_init));
    let feasible = violations.is_empty();
    BoundReport {
        s_lower,
        t_star,
        noise_bound: nb,
        b_recommended: b,
        l_recommended,
        delta_cap: cap,
        eta,
        phi,
        a1,
        a2,
        a3,
        a4,
        margins,
        c_used: c,
        c_init,
        t,
        feasible,
        violations,
    }
}

/// Solves the circular sizing `T = B(T)·L(T)` by fixed-point iteration,
/// starting from `inp.t`. Returns the last report (with `t` set to the
/// horizon it was evaluated at); stops early if `L` is undefined.
pub fn resolve_horizon(inp: &BoundInputs) -> BoundReport {
    let mut cur = *inp;
    let mut report = check_assumptions(&cur);
    for _ in 0..64 {
        let Some(l) = report.l_recommended else {
            break;
        };
        let next = (report.b_recommended * l) as f64;
        if next == cur.t {
            break;
        }
        cur.t = next;
        report = check_assumptions(&cur);
    }
    report
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6e}"))
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let yes = |b: bool| if b { "pass" } else { "FAIL" };
        writeln!(f, "{:<12} {:.6e}", "s_lower", self.s_lower)?;
        writeln!(f, "{:<12} {}", "t_star", opt(self.t_star))?;
        writeln!(f, "{:<12} {:.6e}", "T", self.t)?;
        writeln!(f, "{:<12} {:.6e}", "C", self.c_used)?;
        writeln!(f, "{:<12} {}", "B", self.b_recommended)?;
        writeln!(
            f,
            "{:<12} {}",
            "L",
            self.l_recommended.map_or("undefined".into(), |l| l.to_string())
        )?;
        writeln!(f, "{:<12} {:.6e}", "noise_bound", self.noise_bound)?;
        writeln!(f, "{:<12} {:.6e}", "Delta", self.delta_cap)?;
        writeln!(f, "{:<12} {}", "eta", opt(self.eta))?;
        writeln!(f, "{:<12} {}", "phi", opt(self.phi))?;
        writeln!(f, "{:<12} {:<5} margin {:.6e}", "A.1", yes(self.a1), self.margins.a1)?;
        writeln!(f, "{:<12} {:<5} margin {}", "A.2", yes(self.a2), opt(self.margins.a2))?;
        writeln!(f, "{:<12} {:<5} margin {}", "A.3", yes(self.a3), opt(self.margins.a3))?;
        writeln!(f, "{:<12} {:<5} margin {}", "A.4", yes(self.a4), opt(self.margins.a4))?;
        writeln!(f, "{:<12} {:.6e}", "eps_lower", self.margins.eps_lower)?;
        writeln!(f, "{:<12} {:.6e}", "eps_upper", self.margins.eps_upper)?;
        writeln!(f, "{:<12} {:.6e}", "gap_vs_noise", self.margins.gap_vs_noise)?;
        writeln!(f, "{:<12} {}", "feasible", self.feasible)?;
        for v in &self.violations {
            writeln!(f, "  violated: {v}")?;
        }
        Ok(())
    }
}
