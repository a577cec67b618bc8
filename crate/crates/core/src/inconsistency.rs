//! The gamma-process counterexample: under a gamma-process prior on the
//! feature probabilities the ratio `M̂_n / M_n` keeps a non-vanishing chance
//! of missing 1 by a fixed margin, however large `n` gets.
//!
//! The underlying statement quantifies over every estimator; a program
//! cannot, so the experiment fixes `M̂_n = K_{n,1}/n` and exhibits the
//! failure distributionally over prior draws.

use serde::{Deserialize, Serialize};

use crate::asymptotics::{is_degenerate, ratios_at};
use crate::error::{domain, Result};
use crate::exec::Execution;
use crate::generators::{gamma_process_jumps, GammaProcessSpec};
use crate::sampler::{derive_seed, run_replicates, ProbabilitySource, ReplicateDataset};
use crate::stats::{ks_distance, Summary};

/// Minimum fraction of misses, at every `n`, for the failure to count as
/// persistent.
pub const PERSISTENCE_FLOOR: f64 = 0.05;

/// Default Kolmogorov–Smirnov acceptance threshold for the total-mass law.
pub const KS_THRESHOLD: f64 = 0.02;

/// Jump truncation used by the experiment; keeps the discarded mass far
/// below the Monte Carlo noise of the ratio.
pub const DEFAULT_JUMP_TRUNCATION: f64 = 1e-10;

/// `f(y) = 1 + e^{-(1+3ε̄)y} - e^{-(1-3ε̄)y}`.
pub fn floor_objective(eps_bar: f64, y: f64) -> f64 {
    1.0 + (-(1.0 + 3.0 * eps_bar) * y).exp() - (-(1.0 - 3.0 * eps_bar) * y).exp()
}

/// Minimizer `y* = ln((1+3ε̄)/(1-3ε̄)) / (6ε̄)` of [`floor_objective`].
pub fn floor_minimizer(eps_bar: f64) -> Result<f64> {
    check_eps_bar(eps_bar)?;
    Ok(((1.0 + 3.0 * eps_bar) / (1.0 - 3.0 * eps_bar)).ln() / (6.0 * eps_bar))
}

/// Positive floor `C(ε̄) = f(y*)` for `ε̄ ∈ (0, 1/3)`.
///
/// The counterexample is stated for `ε ∈ (0, 1/6)` and its argument runs with
/// `ε̄ = 2ε`; callers pass `ε̄` explicitly.
pub fn constant_c(eps_bar: f64) -> Result<f64> {
    let y = floor_minimizer(eps_bar)?;
    Ok(floor_objective(eps_bar, y))
}

fn check_eps_bar(eps_bar: f64) -> Result<()> {
    if !(eps_bar > 0.0 && eps_bar < 1.0 / 3.0) {
        return Err(domain(format!("epsilon = {eps_bar} must lie in (0, 1/3)")));
    }
    Ok(())
}

/// Goodness of fit of the total raw jump mass of a tilted gamma process
/// against Exponential(rate n+1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalMassCheck {
    pub n: u64,
    pub draws: usize,
    pub ks_distance: f64,
    pub ks_threshold: f64,
    pub ks_pass: bool,
    pub mean: f64,
    pub std_error: f64,
    pub expected_mean: f64,
    /// `|mean - 1/(n+1)| <= 4 se`.
    pub mean_within: bool,
    /// Draws breaking `1 - S/2 <= M/S <= 1`, with `M = Σ(1 - e^{-s_k})`.
    pub sandwich_violations: usize,
    pub mean_jump_count: f64,
}

impl TotalMassCheck {
    pub fn passed(&self) -> bool {
        self.ks_pass && self.mean_within && self.sandwich_violations == 0
    }
}

fn sandwich_holds(jumps: &[f64]) -> bool {
    let total: f64 = jumps.iter().sum();
    if total == 0.0 {
        return true;
    }
    let mass: f64 = jumps.iter().map(|&s| -(-s).exp_m1()).sum();
    let slack = 4.0 * f64::EPSILON * total;
    mass <= total + slack && mass >= total - 0.5 * total * total - slack
}

pub fn posterior_total_mass_check(
    n: u64,
    draws: usize,
    jump_truncation: f64,
    seed: u64,
    ks_threshold: f64,
    exec: Execution,
) -> Result<TotalMassCheck> {
    if draws == 0 {
        return Err(domain("draw count must be at least 1"));
    }
    let spec = GammaProcessSpec {
        jump_truncation,
        tilt: n,
    };
    spec.validate()?;
    let per_draw = exec.map_indexed(draws, |i| -> Result<(f64, usize, bool)> {
        let jumps = gamma_process_jumps(&spec, derive_seed(seed, i as u64))?;
        Ok((jumps.iter().sum(), jumps.len(), sandwich_holds(&jumps)))
    });
    let mut totals = Vec::with_capacity(draws);
    let mut jump_count = 0usize;
    let mut sandwich_violations = 0;
    for r in per_draw {
        let (total, count, ok) = r?;
        totals.push(total);
        jump_count += count;
        sandwich_violations += usize::from(!ok);
    }
    let rate = n as f64 + 1.0;
    let ks = ks_distance(&totals, |x| -(-rate * x.max(0.0)).exp_m1());
    let summary = Summary::of(&totals);
    let expected_mean = 1.0 / rate;
    // exponential standard deviation equals its mean
    let std_error = expected_mean / (draws as f64).sqrt();
    Ok(TotalMassCheck {
        n,
        draws,
        ks_distance: ks,
        ks_threshold,
        ks_pass: ks < ks_threshold,
        mean: summary.mean,
        std_error,
        expected_mean,
        mean_within: (summary.mean - expected_mean).abs() <= 4.0 * std_error,
        sandwich_violations,
        mean_jump_count: jump_count as f64 / draws as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InconsistencyRow {
    pub n: u64,
    pub records: usize,
    /// Records with `M_n` below the truncation noise floor, excluded from
    /// the fraction.
    pub degenerate: usize,
    pub ratio: Summary,
    /// Fraction of non-degenerate records with `|M̂_n/M_n - 1| >= ε`.
    pub fraction_outside: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InconsistencyReport {
    pub note: String,
    pub epsilon: f64,
    /// `2ε`, the margin the analytic floor is evaluated at.
    pub epsilon_bar: f64,
    pub floor_c: f64,
    pub rows: Vec<InconsistencyRow>,
    /// Smallest fraction over the grid is at least [`PERSISTENCE_FLOOR`].
    pub persists: bool,
}

impl InconsistencyReport {
    pub fn fractions(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.fraction_outside).collect()
    }
}

const REPORT_NOTE: &str = "estimator fixed to K_{n,1}/n; failure exhibited over gamma-process prior draws";

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0 / 6.0) {
        return Err(domain(format!("epsilon = {epsilon} must lie in (0, 1/6)")));
    }
    Ok(())
}

/// Per-`n` miss fractions of an existing dataset. Also used for the
/// power-law control.
pub fn inconsistency_report(dataset: &ReplicateDataset, epsilon: f64) -> Result<InconsistencyReport> {
    check_epsilon(epsilon)?;
    let rows: Vec<InconsistencyRow> = dataset
        .n_grid
        .iter()
        .map(|&n| {
            let (ratios, degenerate, records) = ratios_at(dataset, n);
            let outside = ratios.iter().filter(|&&x| (x - 1.0).abs() >= epsilon).count();
            InconsistencyRow {
                n,
                records,
                degenerate,
                ratio: Summary::of(&ratios),
                fraction_outside: if ratios.is_empty() {
                    f64::NAN
                } else {
                    outside as f64 / ratios.len() as f64
                },
            }
        })
        .collect();
    let persists = !rows.is_empty() && rows.iter().all(|r| r.fraction_outside >= PERSISTENCE_FLOOR);
    Ok(InconsistencyReport {
        note: REPORT_NOTE.into(),
        epsilon,
        epsilon_bar: 2.0 * epsilon,
        floor_c: constant_c(2.0 * epsilon)?,
        rows,
        persists,
    })
}

/// Draw `m_priors` gamma-process probability vectors, simulate one
/// trajectory per draw, and report the miss fractions along `n_grid`.
pub fn inconsistency_experiment(
    spec: &GammaProcessSpec,
    n_grid: &[u64],
    m_priors: usize,
    epsilon: f64,
    seed: u64,
    exec: Execution,
) -> Result<(InconsistencyReport, ReplicateDataset)> {
    check_epsilon(epsilon)?;
    spec.validate()?;
    if m_priors < 100 {
        return Err(domain(format!("m_priors = {m_priors} must be at least 100")));
    }
    let dataset = run_replicates(
        &ProbabilitySource::GammaProcess(*spec),
        n_grid,
        m_priors,
        seed,
        1,
        exec,
    )?;
    Ok((inconsistency_report(&dataset, epsilon)?, dataset))
}

/// Number of records flagged degenerate across the whole dataset.
pub fn degenerate_count(dataset: &ReplicateDataset) -> usize {
    dataset.records.iter().filter(|r| is_degenerate(&r.stats)).count()
}
