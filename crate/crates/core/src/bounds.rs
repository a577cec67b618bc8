//! Exponential tail bounds for the missing mass and the frequency counts,
//! and their validation against Monte Carlo tail frequencies.
//!
//! The missing mass is sub-Gaussian on the left with variance factor
//! `v⁻ = 2 E[K_{n+2,2}] / ((n+2)(n+1))` and sub-Gamma on the right with
//! variance factor `v⁺ = 2 E[K_n] / (n² - 2n)` and scale `1/n`. `K_{n,r}` is
//! sub-Poisson with variance factor `E[K_{n,r}]`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{expected_k_n, expected_k_nr, expected_m_n, ProbabilityVector};
use crate::sampler::ReplicateDataset;
use crate::special::compensated_sum;
use crate::stats::frequency_with_error;

/// Standard errors an empirical frequency may exceed its bound by before it
/// is flagged.
pub const VIOLATION_SIGMAS: f64 = 4.0;

pub fn variance_factor_minus(p: &ProbabilityVector, n: u64) -> f64 {
    let ek = expected_k_nr(p, n + 2, 2).expect("r = 2 <= n + 2");
    2.0 * ek / ((n + 2) as f64 * (n + 1) as f64)
}

pub fn variance_factor_plus(p: &ProbabilityVector, n: u64) -> Result<f64> {
    if n <= 2 {
        return Err(domain(format!("v_plus requires n > 2, got n = {n}")));
    }
    let nf = n as f64;
    Ok(2.0 * expected_k_n(p, n) / (nf * nf - 2.0 * nf))
}

fn check_x(x: f64) -> Result<()> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(domain(format!("deviation x = {x} must be finite and >= 0")));
    }
    Ok(())
}

/// `exp(-x² / (2 v⁻))`, with `exp(-∞) = 0` when `v⁻ = 0 < x`.
pub fn left_tail_from(v_minus: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    if v_minus <= 0.0 {
        return 0.0;
    }
    (-x * x / (2.0 * v_minus)).exp().min(1.0)
}

/// `exp{-v⁺ n² [1 + u - sqrt(1 + u)]}` with `u = x / (n v⁺)`.
pub fn right_tail_from(v_plus: f64, n: u64, x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    if v_plus <= 0.0 {
        return 0.0;
    }
    let nf = n as f64;
    let u = x / (nf * v_plus);
    let shape = u - u / (1.0 + (1.0 + u).sqrt()); // 1 + u - sqrt(1 + u), cancellation-free
    (-v_plus * nf * nf * shape).exp().clamp(0.0, 1.0)
}

/// Unclamped `2 exp{-x² / (2 (mean + x/3))}`.
pub fn knr_tail_raw(mean: f64, x: f64) -> f64 {
    let denom = 2.0 * (mean + x / 3.0);
    if denom <= 0.0 {
        return if x == 0.0 { 2.0 } else { 0.0 };
    }
    2.0 * (-x * x / denom).exp()
}

pub fn mm_left_tail_bound(p: &ProbabilityVector, n: u64, x: f64) -> Result<f64> {
    check_x(x)?;
    Ok(left_tail_from(variance_factor_minus(p, n), x))
}

pub fn mm_right_tail_bound(p: &ProbabilityVector, n: u64, x: f64) -> Result<f64> {
    check_x(x)?;
    let v = variance_factor_plus(p, n)?;
    Ok(right_tail_from(v, n, x))
}

pub fn knr_tail_bound(p: &ProbabilityVector, n: u64, r: u64, x: f64) -> Result<f64> {
    check_x(x)?;
    let mean = expected_k_nr(p, n, r)?;
    Ok(knr_tail_raw(mean, x).min(1.0))
}

/// Generic Chernoff bound for a right sub-Gamma tail with variance factor `v`
/// and scale `c`: `exp(-sup_{0 <= λ < 1/c} [λx - λ²v / (2(1 - cλ))])`,
/// with the supremum found numerically.
pub fn sub_gamma_chernoff_bound(v: f64, scale: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    if v <= 0.0 {
        return 0.0;
    }
    let rate = |lambda: f64| lambda * x - lambda * lambda * v / (2.0 * (1.0 - scale * lambda));
    // rate is concave on [0, 1/c); golden-section search
    let (mut a, mut b) = (0.0, (1.0 / scale) * (1.0 - 1e-15));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..300 {
        if rate(c) > rate(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
        if (b - a) <= 1e-15 * b.max(1e-300) {
            break;
        }
    }
    let best = rate(0.5 * (a + b)).max(0.0);
    (-best).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailEvent {
    MissingMassLeft,
    MissingMassRight,
    /// Right tail against the generic sub-Gamma Chernoff diagnostic.
    MissingMassRightChernoff,
    SingletonsTwoSided,
}

/// An empirical tail frequency that exceeds its bound by more than
/// [`VIOLATION_SIGMAS`] standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub event: TailEvent,
    pub x: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub bound: f64,
}

/// Two-sided tail comparison for `K_{n,1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingletonTails {
    pub expected: f64,
    pub x_grid: Vec<f64>,
    pub bounds_raw: Vec<f64>,
    pub bounds: Vec<f64>,
    pub empirical: Vec<f64>,
    pub std_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: u64,
    pub replicates: usize,
    pub expected_m_n: f64,
    pub x_grid: Vec<f64>,
    pub v_minus: f64,
    pub v_plus: f64,
    pub left_bounds: Vec<f64>,
    pub right_bounds: Vec<f64>,
    /// Generic sub-Gamma Chernoff bound with the same `v⁺` and scale `1/n`.
    pub right_bounds_chernoff: Vec<f64>,
    pub empirical_left: Vec<f64>,
    pub empirical_right: Vec<f64>,
    pub stderr_left: Vec<f64>,
    pub stderr_right: Vec<f64>,
    pub singletons: SingletonTails,
    pub violations: Vec<Violation>,
    /// Exceedances of the Chernoff diagnostic; kept apart from `violations`.
    pub diagnostic_violations: Vec<Violation>,
}

impl BoundReport {
    /// Whether any M_n event is flagged at `x_grid[i]`.
    pub fn missing_mass_violation_at(&self, i: usize) -> bool {
        let x = self.x_grid[i];
        self.violations.iter().any(|v| {
            v.x == x && matches!(v.event, TailEvent::MissingMassLeft | TailEvent::MissingMassRight)
        })
    }

    pub fn singleton_violation_at(&self, i: usize) -> bool {
        let x = self.singletons.x_grid[i];
        self.violations
            .iter()
            .any(|v| v.x == x && v.event == TailEvent::SingletonsTwoSided)
    }
}

fn check_grid(grid: &[f64], name: &str) -> Result<()> {
    for &x in grid {
        check_x(x).map_err(|_| domain(format!("{name} entries must be finite and >= 0")))?;
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

fn flag(
    out: &mut Vec<Violation>,
    event: TailEvent,
    x: f64,
    empirical: f64,
    std_error: f64,
    bound: f64,
) {
    if empirical - VIOLATION_SIGMAS * std_error > bound {
        out.push(Violation {
            event,
            x,
            empirical,
            std_error,
            bound,
        });
    }
}

/// Compare the tail bounds at sample size `n` with the tail frequencies
/// observed in `dataset`, which must have been generated under `p`.
///
/// `x_grid` holds deviations of the missing mass, `k_grid` deviations of
/// `K_{n,1}`.
pub fn empirical_tail_compare(
    dataset: &ReplicateDataset,
    p: &ProbabilityVector,
    n: u64,
    x_grid: &[f64],
    k_grid: &[f64],
) -> Result<BoundReport> {
    if n <= 2 {
        return Err(domain(format!("missing-mass tail bounds require n > 2, got {n}")));
    }
    check_grid(x_grid, "x_grid")?;
    check_grid(k_grid, "k_grid")?;
    let records: Vec<_> = dataset.at(n).collect();
    if records.is_empty() {
        return Err(Error::Alignment {
            what: "dataset records at the requested n",
            expected: dataset.replicates.max(1),
            found: 0,
        });
    }
    if let Some(bad) = records
        .iter()
        .find(|r| r.tail_mass_bound != p.tail_mass_bound())
    {
        return Err(domain(format!(
            "dataset tail bound {} does not match the probability vector ({})",
            bad.tail_mass_bound,
            p.tail_mass_bound()
        )));
    }
    let m = records.len();
    let mean_m = expected_m_n(p, n);
    let mean_k1 = expected_k_nr(p, n, 1)?;
    let v_minus = variance_factor_minus(p, n);
    let v_plus = variance_factor_plus(p, n)?;
    let deviations: Vec<f64> = records.iter().map(|r| r.m_n_oracle - mean_m).collect();
    let k_devs: Vec<f64> = records.iter().map(|r| r.k(1) as f64 - mean_k1).collect();

    let mut violations = Vec::new();
    let mut report = BoundReport {
        n,
        replicates: m,
        expected_m_n: mean_m,
        x_grid: x_grid.to_vec(),
        v_minus,
        v_plus,
        left_bounds: Vec::with_capacity(x_grid.len()),
        right_bounds: Vec::with_capacity(x_grid.len()),
        right_bounds_chernoff: Vec::with_capacity(x_grid.len()),
        empirical_left: Vec::with_capacity(x_grid.len()),
        empirical_right: Vec::with_capacity(x_grid.len()),
        stderr_left: Vec::with_capacity(x_grid.len()),
        stderr_right: Vec::with_capacity(x_grid.len()),
        singletons: SingletonTails {
            expected: mean_k1,
            x_grid: k_grid.to_vec(),
            bounds_raw: Vec::new(),
            bounds: Vec::new(),
            empirical: Vec::new(),
            std_errors: Vec::new(),
        },
        violations: Vec::new(),
        diagnostic_violations: Vec::new(),
    };
    for &x in x_grid {
        let left = left_tail_from(v_minus, x);
        let right = right_tail_from(v_plus, n, x);
        let chernoff = sub_gamma_chernoff_bound(v_plus, 1.0 / n as f64, x);
        let (fl, sl) = frequency_with_error(deviations.iter().filter(|&&d| d <= -x).count(), m);
        let (fr, sr) = frequency_with_error(deviations.iter().filter(|&&d| d >= x).count(), m);
        flag(&mut violations, TailEvent::MissingMassLeft, x, fl, sl, left);
        flag(&mut violations, TailEvent::MissingMassRight, x, fr, sr, right);
        flag(
            &mut report.diagnostic_violations,
            TailEvent::MissingMassRightChernoff,
            x,
            fr,
            sr,
            chernoff,
        );
        report.left_bounds.push(left);
        report.right_bounds.push(right);
        report.right_bounds_chernoff.push(chernoff);
        report.empirical_left.push(fl);
        report.empirical_right.push(fr);
        report.stderr_left.push(sl);
        report.stderr_right.push(sr);
    }
    for &x in k_grid {
        let raw = knr_tail_raw(mean_k1, x);
        let bound = raw.min(1.0);
        let (f, s) = frequency_with_error(k_devs.iter().filter(|&&d| d.abs() >= x).count(), m);
        flag(&mut violations, TailEvent::SingletonsTwoSided, x, f, s, bound);
        let st = &mut report.singletons;
        st.bounds_raw.push(raw);
        st.bounds.push(bound);
        st.empirical.push(f);
        st.std_errors.push(s);
    }
    report.violations = violations;
    Ok(report)
}

/// Default missing-mass deviation grid: `0, 0.5σ, ..., 5σ` with `σ` the exact
/// standard deviation of `M_n`.
pub fn default_x_grid(p: &ProbabilityVector, n: u64) -> Vec<f64> {
    let sd = crate::model::variance_m_n(p, n).sqrt();
    if sd == 0.0 {
        return vec![0.0];
    }
    (0..=10).map(|i| 0.5 * i as f64 * sd).collect()
}

/// Default `K_{n,1}` deviation grid: `0, 1, ..., ceil(6 sqrt(E[K_{n,1}] + 1))`.
pub fn default_k_grid(p: &ProbabilityVector, n: u64) -> Vec<f64> {
    let mean = expected_k_nr(p, n, 1).unwrap_or(0.0);
    let top = (6.0 * (mean + 1.0).sqrt()).ceil() as usize;
    (0..=top).map(|i| i as f64).collect()
}

/// Empirical moment generating function of `M_n - E[M_n]` at one `λ <= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceCheck {
    pub lambda: f64,
    pub empirical: f64,
    pub std_error: f64,
    /// `exp(λ² v⁻ / 2)`.
    pub bound: f64,
    pub holds: bool,
}

/// Check `E[e^{λ(M_n - E M_n)}] <= e^{λ² v⁻/2}` at `λ = c / sqrt(v⁻)` for each
/// `c` in `scaled_lambdas` (all `<= 0`), allowing `sigmas` Monte Carlo
/// standard errors.
pub fn left_log_laplace_check(
    dataset: &ReplicateDataset,
    p: &ProbabilityVector,
    n: u64,
    scaled_lambdas: &[f64],
    sigmas: f64,
) -> Result<Vec<LaplaceCheck>> {
    let v = variance_factor_minus(p, n);
    if v <= 0.0 {
        return Err(domain("left variance factor is zero; nothing to check"));
    }
    let mean = expected_m_n(p, n);
    let devs: Vec<f64> = dataset.at(n).map(|r| r.m_n_oracle - mean).collect();
    if devs.is_empty() {
        return Err(domain(format!("dataset has no records at n = {n}")));
    }
    let m = devs.len() as f64;
    scaled_lambdas
        .iter()
        .map(|&c| {
            if c > 0.0 {
                return Err(domain("left-tail check needs lambda <= 0"));
            }
            let lambda = c / v.sqrt();
            let vals: Vec<f64> = devs.iter().map(|d| (lambda * d).exp()).collect();
            let emp = compensated_sum(vals.iter().copied()) / m;
            let var = compensated_sum(vals.iter().map(|x| (x - emp) * (x - emp))) / (m - 1.0).max(1.0);
            let se = (var / m).sqrt();
            let bound = (lambda * lambda * v / 2.0).exp();
            Ok(LaplaceCheck {
                lambda,
                empirical: emp,
                std_error: se,
                bound,
                holds: emp <= bound + sigmas * se,
            })
        })
        .collect()
}
