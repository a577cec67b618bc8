//! Regular-variation asymptotics of the frequency counts and the
//! consistency diagnostic of the estimator `M̂_n = K_{n,1}/n`.
//!
//! For a regularly varying sequence with index `α`,
//! `E[K_{n,r}] ~ α Γ(r - α) / r! · n^α ℓ(n)`. [`karlin_ratio`] measures the
//! exact expectation against that asymptote; the contribution of the
//! features beyond the materialized truncation is added by quadrature so
//! that the ratio reflects the untruncated sequence.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::generators::{power_law, RegVarSpec};
use crate::model::{expected_k_n, expected_k_nr, phi_n, phi_nr, ProbabilityVector, TailDescriptor};
use crate::sampler::ReplicateDataset;
use crate::special::{compensated_sum, integrate, ln_binomial};
use crate::stats::Summary;

/// `α Γ(r - α) / r!`.
pub fn karlin_constant(alpha: f64, r: u64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    if r == 0 {
        return Err(domain("frequency r must be >= 1"));
    }
    let rf = r as f64;
    Ok((alpha.ln() + ln_gamma(rf - alpha) - ln_gamma(rf + 1.0)).exp())
}

fn spec_from_descriptor(p: &ProbabilityVector) -> Result<RegVarSpec> {
    match p.tail_descriptor() {
        Some(&TailDescriptor::PowerLaw {
            alpha,
            scale,
            log_exponent,
        }) => Ok(RegVarSpec {
            alpha,
            scale,
            log_exponent,
            truncation_threshold: p.values().last().copied().unwrap_or(scale),
        }),
        _ => Err(Error::Unsupported(
            "regular-variation asymptotics need a power-law probability vector".into(),
        )),
    }
}

/// Slowly varying factor `ℓ(n)` of the tail-count function
/// `ν̄(x) = #{j : p_j >= x} ~ x^{-α} ℓ(1/x)`.
///
/// For `β = 0` this is exactly `c^α`. Otherwise `ℓ(n) = j*(n) n^{-α}` where
/// `j*` solves `p(j*) = 1/n` on the continuous index.
pub fn slowly_varying_factor(spec: &RegVarSpec, n: f64) -> f64 {
    let alpha = spec.alpha;
    if spec.log_exponent == 0.0 {
        return spec.scale.powf(alpha);
    }
    // g(u) = ln c + ln n - u/α + β ln(1 + u), decreasing in u >= 0
    let g = |u: f64| spec.scale.ln() + n.ln() - u / alpha + spec.log_exponent * u.ln_1p();
    if g(0.0) <= 0.0 {
        return n.powf(-alpha);
    }
    let mut hi = 1.0;
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi) - alpha * n.ln()).exp()
}

/// Contribution to `E[K_{n,r}]` of the power-law features beyond the
/// materialized ones, `Σ_{j > J} C(n,r) p_j^r (1-p_j)^{n-r}`, approximated by
/// the midpoint-corrected integral over `x > J + 1/2`.
pub fn unmaterialized_k_nr(spec: &RegVarSpec, retained: usize, n: u64, r: u64) -> Result<f64> {
    if r == 0 || r > n {
        return Err(domain(format!("frequency r = {r} must lie in 1..={n}")));
    }
    let ln_c = ln_binomial(n, r);
    let (rf, rest, nf) = (r as f64, (n - r) as f64, n as f64);
    let integrand = |u: f64| {
        let x = u.exp();
        let p = spec.probability_at(x);
        if p >= 1.0 || p <= 0.0 {
            return 0.0;
        }
        (ln_c + rf * p.ln() + rest * (-p).ln_1p() + u).exp()
    };
    let u0 = (retained as f64 + 0.5).ln();
    // beyond n p(x) = r the integrand decays like exp(-(r/α - 1) u)
    let u_peak = spec.alpha * (spec.scale * nf / rf).ln();
    let decay = rf / spec.alpha - 1.0;
    let log_slack = spec.log_exponent.abs() * rf * 4.0;
    let u_end = u0.max(u_peak) + (60.0 + log_slack) / decay;
    let panels = (((u_end - u0) / 0.05).ceil() as usize).max(8);
    Ok(integrate(integrand, u0, u_end, panels))
}

/// `E[K_{n,r}]` of the untruncated power law behind `p`.
pub fn power_law_expected_k_nr(p: &ProbabilityVector, n: u64, r: u64) -> Result<f64> {
    let spec = spec_from_descriptor(p)?;
    Ok(expected_k_nr(p, n, r)? + unmaterialized_k_nr(&spec, p.len(), n, r)?)
}

/// `E[K_{n,r}] / (α Γ(r-α)/r! · n^α ℓ(n))` for an already materialized power law.
pub fn karlin_ratio_of(p: &ProbabilityVector, n: u64, r: u64) -> Result<f64> {
    let spec = spec_from_descriptor(p)?;
    let exact = power_law_expected_k_nr(p, n, r)?;
    let nf = n as f64;
    let asymptote =
        karlin_constant(spec.alpha, r)? * nf.powf(spec.alpha) * slowly_varying_factor(&spec, nf);
    Ok(exact / asymptote)
}

pub fn karlin_ratio(spec: &RegVarSpec, n: u64, r: u64) -> Result<f64> {
    karlin_ratio_of(&power_law(spec)?, n, r)
}

/// Gap between exact and Poissonized frequency counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub n: u64,
    pub r: u64,
    pub expected_k_n: f64,
    pub phi_n: f64,
    /// `|Φ_n - E[K_n]|`.
    pub aggregate_gap: f64,
    /// `(2/n) Φ_{n,2}`.
    pub aggregate_budget: f64,
    pub aggregate_holds: bool,
    pub expected_k_nr: f64,
    pub phi_nr: f64,
    /// `|E[K_{n,r}] - Φ_{n,r}|`.
    pub per_r_gap: f64,
    /// Smallest `c` with `gap <= (c/n) max(Φ_{n,r}, Φ_{n,r+2})`.
    pub implied_constant: f64,
}

/// `ln(1 - p) + p`, by series where the direct form cancels.
fn log1m_plus(p: f64) -> f64 {
    if p < 1e-3 {
        let mut term = p;
        let mut acc = 0.0;
        for k in 2..8 {
            term *= p;
            acc -= term / k as f64;
        }
        acc
    } else {
        (-p).ln_1p() + p
    }
}

/// `Φ_n - E[K_n] = Σ_j [(1-p_j)^n - e^{-n p_j}]`, summed term by term; every
/// term is `<= 0`, so no cancellation occurs.
pub fn poissonization_gap(p: &ProbabilityVector, n: u64) -> f64 {
    let nf = n as f64;
    compensated_sum(p.values().iter().map(|&pj| {
        if pj >= 1.0 {
            (-nf).exp()
        } else {
            (-nf * pj).exp() * -(nf * log1m_plus(pj)).exp_m1()
        }
    }))
}

pub fn phi_vs_ek_gap(p: &ProbabilityVector, n: u64, r: u64) -> Result<GapReport> {
    if n <= 2 {
        return Err(domain(format!("gap lemma requires n > 2, got n = {n}")));
    }
    if r == 0 || r > n {
        return Err(domain(format!("frequency r = {r} must lie in 1..={n}")));
    }
    let ek = expected_k_n(p, n);
    let pn = phi_n(p, n);
    let gap = poissonization_gap(p, n);
    let budget = 2.0 / n as f64 * phi_nr(p, n, 2);
    let ekr = expected_k_nr(p, n, r)?;
    let pnr = phi_nr(p, n, r);
    let per_r_gap = (ekr - pnr).abs();
    let scale = pnr.max(phi_nr(p, n, r + 2));
    let implied_constant = if scale > 0.0 {
        n as f64 * per_r_gap / scale
    } else {
        0.0
    };
    Ok(GapReport {
        n,
        r,
        expected_k_n: ek,
        phi_n: pn,
        aggregate_gap: gap,
        aggregate_budget: budget,
        aggregate_holds: gap <= budget * (1.0 + 1e-12),
        expected_k_nr: ekr,
        phi_nr: pnr,
        per_r_gap,
        implied_constant,
    })
}

/// Per-`n` summary of the ratio `M̂_n / M_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub n: u64,
    pub records: usize,
    /// Records whose retained unseen mass does not exceed the truncation
    /// bound; excluded from the ratio statistics.
    pub degenerate: usize,
    pub ratio: Summary,
    /// Fraction of non-degenerate records with `|M̂_n/M_n - 1| <= ε`.
    pub fraction_within: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyDiagnostic {
    pub epsilon: f64,
    pub rows: Vec<ConsistencyRow>,
}

impl ConsistencyDiagnostic {
    pub fn fractions(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.fraction_within).collect()
    }

    pub fn fraction_non_decreasing(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].fraction_within >= w[0].fraction_within)
    }
}

/// A record is degenerate when `M_n` is not resolved above the truncation
/// noise: `M_n - tail <= tail` (for an untruncated vector, `M_n = 0`).
pub fn is_degenerate(rec: &crate::model::StatisticsRecord) -> bool {
    rec.m_n_oracle - rec.tail_mass_bound <= rec.tail_mass_bound
}

pub fn ratios_at(dataset: &ReplicateDataset, n: u64) -> (Vec<f64>, usize, usize) {
    let mut ratios = Vec::new();
    let mut degenerate = 0;
    let mut total = 0;
    for rec in dataset.at(n) {
        total += 1;
        if is_degenerate(rec) {
            degenerate += 1;
        } else {
            ratios.push(rec.m_hat / rec.m_n_oracle);
        }
    }
    (ratios, degenerate, total)
}

pub fn consistency_diagnostic(
    dataset: &ReplicateDataset,
    epsilon: f64,
) -> Result<ConsistencyDiagnostic> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(domain(format!("epsilon = {epsilon} must be positive")));
    }
    if dataset.records.is_empty() {
        return Err(domain("dataset has no records"));
    }
    let rows = dataset
        .n_grid
        .iter()
        .map(|&n| {
            let (ratios, degenerate, total) = ratios_at(dataset, n);
            let within = ratios.iter().filter(|&&x| (x - 1.0).abs() <= epsilon).count();
            let fraction_within = if ratios.is_empty() {
                f64::NAN
            } else {
                within as f64 / ratios.len() as f64
            };
            ConsistencyRow {
                n,
                records: total,
                degenerate,
                ratio: Summary::of(&ratios),
                fraction_within,
            }
        })
        .collect();
    Ok(ConsistencyDiagnostic { epsilon, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StatisticsRecord;
    use crate::sampler::ReplicateRecord;

    #[test]
    fn karlin_constant_examples() {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let k1 = karlin_constant(0.5, 1).unwrap();
        assert!((k1 - 0.5 * sqrt_pi).abs() < 1e-14);
        assert!((k1 - 0.886227).abs() < 1e-6);
        let k2 = karlin_constant(0.5, 2).unwrap();
        assert!((k2 - 0.5 * (sqrt_pi / 2.0) / 2.0).abs() < 1e-14);
        assert!((k2 - 0.221557).abs() < 1e-6);
        assert!(karlin_constant(1.0, 1).is_err());
        assert!(karlin_constant(0.0, 1).is_err());
    }

    #[test]
    fn karlin_constant_recurrence() {
        for i in 1..20 {
            let alpha = i as f64 / 20.0;
            let ratio = karlin_constant(alpha, 2).unwrap() / karlin_constant(alpha, 1).unwrap();
            assert!((ratio - (1.0 - alpha) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gap_examples() {
        let half = ProbabilityVector::finite(vec![0.5]).unwrap();
        let g = phi_vs_ek_gap(&half, 10, 1).unwrap();
        assert!(g.aggregate_holds);
        let one = ProbabilityVector::finite(vec![1.0]).unwrap();
        let g = phi_vs_ek_gap(&one, 5, 1).unwrap();
        assert_eq!(g.expected_k_n, 1.0);
        assert!((g.aggregate_gap - (-5f64).exp()).abs() < 1e-15);
        assert!(g.aggregate_holds);
        assert!(phi_vs_ek_gap(&one, 2, 1).is_err());
    }

    #[test]
    fn karlin_ratio_rejects_other_families() {
        let g = crate::generators::geometric(0.5, 1e-6).unwrap();
        assert!(matches!(karlin_ratio_of(&g, 100, 1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn slowly_varying_factor_matches_tail_count() {
        let spec = RegVarSpec {
            alpha: 0.5,
            scale: 0.1,
            log_exponent: 1.0,
            truncation_threshold: 1e-10,
        };
        let p = power_law(&spec).unwrap();
        for &n in &[1e4, 1e6, 1e8] {
            let count = p.values().iter().filter(|&&v| v >= 1.0 / n).count() as f64;
            let ell = slowly_varying_factor(&spec, n);
            assert!((count / (ell * n.powf(0.5)) - 1.0).abs() < 0.05);
        }
    }

    fn record(n: u64, m_oracle: f64, m_hat: f64) -> StatisticsRecord {
        StatisticsRecord {
            n,
            k_n: 1,
            k_nr: vec![(m_hat * n as f64) as u64],
            m_n_oracle: m_oracle,
            m_hat,
            tail_mass_bound: 0.0,
        }
    }

    #[test]
    fn diagnostic_on_exact_ratios() {
        let records = (0..5)
            .flat_map(|i| {
                [10u64, 20].into_iter().map(move |n| ReplicateRecord {
                    replicate: i,
                    stats: record(n, 0.5, 0.5),
                })
            })
            .collect();
        let mut ds = ReplicateDataset {
            config_digest: None,
            master_seed: 0,
            n_grid: vec![10, 20],
            replicates: 5,
            max_frequency: 1,
            records,
        };
        let d = consistency_diagnostic(&ds, 0.1).unwrap();
        assert_eq!(d.fractions(), vec![1.0, 1.0]);
        ds.records[0].stats.m_n_oracle = 0.0;
        let d = consistency_diagnostic(&ds, 0.1).unwrap();
        assert_eq!(d.rows[0].degenerate, 1);
        assert_eq!(d.rows[0].ratio.count, 4);
        assert!(consistency_diagnostic(&ds, 0.0).is_err());
    }
}
