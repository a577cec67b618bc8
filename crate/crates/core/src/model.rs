//! Domain types of the Bernoulli product model and its exact moment calculators.
//!
//! A [`ProbabilityVector`] holds the retained feature probabilities
//! `p_1 >= p_2 >= ... >= p_J` together with a certified upper bound on the
//! mass of the truncated tail. Tail features are never observed at finite
//! truncation, so every missing-mass quantity adds that bound.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::special::{binomial_pmf, compensated_sum, hit_probability, ln_binomial, survival_pow};

/// Family that produced a [`ProbabilityVector`], with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TailDescriptor {
    /// `p_j = scale * j^(-1/alpha) * (1 + ln j)^log_exponent`.
    PowerLaw {
        alpha: f64,
        scale: f64,
        log_exponent: f64,
    },
    Geometric {
        ratio: f64,
    },
    FiniteUniform,
    GammaProcess {
        jump_truncation: f64,
        tilt: u64,
    },
}

/// Truncated, non-increasing feature-probability sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    values: Vec<f64>,
    tail_mass_bound: f64,
    tail_descriptor: Option<TailDescriptor>,
    retained_mass: f64,
}

impl ProbabilityVector {
    /// Validate and wrap a probability sequence.
    pub fn new(
        values: Vec<f64>,
        tail_mass_bound: f64,
        tail_descriptor: Option<TailDescriptor>,
    ) -> Result<Self> {
        if !(tail_mass_bound >= 0.0) || !tail_mass_bound.is_finite() {
            return Err(Error::InvalidVector(format!(
                "tail_mass_bound must be finite and non-negative, got {tail_mass_bound}"
            )));
        }
        for (j, &p) in values.iter().enumerate() {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidVector(format!(
                    "values[{j}] = {p} is outside (0, 1]"
                )));
            }
            if j > 0 && p > values[j - 1] {
                return Err(Error::InvalidVector(format!(
                    "values not non-increasing at index {j}: {} < {p}",
                    values[j - 1]
                )));
            }
        }
        let retained_mass = compensated_sum(values.iter().copied());
        if !(retained_mass + tail_mass_bound).is_finite() {
            return Err(Error::InvalidVector("total mass overflows".into()));
        }
        Ok(Self {
            values,
            tail_mass_bound,
            tail_descriptor,
            retained_mass,
        })
    }

    /// Finite vector with no truncated tail.
    pub fn finite(values: Vec<f64>) -> Result<Self> {
        Self::new(values, 0.0, None)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tail_mass_bound(&self) -> f64 {
        self.tail_mass_bound
    }

    pub fn tail_descriptor(&self) -> Option<&TailDescriptor> {
        self.tail_descriptor.as_ref()
    }

    /// Compensated sum of the retained probabilities.
    pub fn retained_mass(&self) -> f64 {
        self.retained_mass
    }

    /// Retained mass plus the tail bound.
    pub fn total_mass_bound(&self) -> f64 {
        self.retained_mass + self.tail_mass_bound
    }
}

/// Per-feature occurrence counts `X_{n,j}` at sample size `n`.
///
/// Stored sparsely: only features with a positive count are kept, as
/// `(index, count)` pairs sorted by index. `len` is the number of retained
/// features of the paired [`ProbabilityVector`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SufficientStats {
    n: u64,
    len: usize,
    observed: Vec<(usize, u64)>,
}

impl SufficientStats {
    pub fn from_dense(n: u64, counts: &[u64]) -> Result<Self> {
        if n == 0 {
            return Err(domain("sample size n must be positive"));
        }
        let mut observed = Vec::new();
        for (j, &c) in counts.iter().enumerate() {
            if c > n {
                return Err(domain(format!("counts[{j}] = {c} exceeds n = {n}")));
            }
            if c > 0 {
                observed.push((j, c));
            }
        }
        Ok(Self {
            n,
            len: counts.len(),
            observed,
        })
    }

    /// Build from sparse `(index, count)` pairs; pairs must be strictly
    /// increasing in index with counts in `1..=n`.
    pub fn from_sparse(n: u64, len: usize, observed: Vec<(usize, u64)>) -> Result<Self> {
        if n == 0 {
            return Err(domain("sample size n must be positive"));
        }
        let mut prev: Option<usize> = None;
        for &(j, c) in &observed {
            if j >= len {
                return Err(domain(format!("index {j} out of range for {len} features")));
            }
            if prev.is_some_and(|p| p >= j) {
                return Err(domain("sparse counts must be strictly increasing in index"));
            }
            if c == 0 || c > n {
                return Err(domain(format!("count {c} at index {j} outside 1..={n}")));
            }
            prev = Some(j);
        }
        Ok(Self { n, len, observed })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Observed features as `(index, count)` pairs, sorted by index.
    pub fn observed(&self) -> &[(usize, u64)] {
        &self.observed
    }

    pub fn count(&self, j: usize) -> u64 {
        match self.observed.binary_search_by_key(&j, |&(i, _)| i) {
            Ok(pos) => self.observed[pos].1,
            Err(_) => 0,
        }
    }

    pub fn to_dense(&self) -> Vec<u64> {
        let mut counts = vec![0; self.len];
        for &(j, c) in &self.observed {
            counts[j] = c;
        }
        counts
    }

    pub(crate) fn check_paired(&self, p: &ProbabilityVector) -> Result<()> {
        if self.len != p.len() {
            return Err(Error::Alignment {
                what: "counts",
                expected: p.len(),
                found: self.len,
            });
        }
        Ok(())
    }
}

/// Statistics of one replicate at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticsRecord {
    pub n: u64,
    /// Number of distinct features observed.
    pub k_n: u64,
    /// `k_nr[r - 1]` is the number of features observed exactly `r` times.
    pub k_nr: Vec<u64>,
    pub m_n_oracle: f64,
    /// `k_nr[0] / n`.
    pub m_hat: f64,
    pub tail_mass_bound: f64,
}

impl StatisticsRecord {
    /// `K_{n,r}` for `r >= 1`; zero beyond the tracked range.
    pub fn k(&self, r: usize) -> u64 {
        if r == 0 {
            return 0;
        }
        self.k_nr.get(r - 1).copied().unwrap_or(0)
    }

    /// The multiplicative ratio `M̂_n / M_n`, or `None` when `M_n = 0`.
    pub fn estimator_ratio(&self) -> Option<f64> {
        (self.m_n_oracle > 0.0).then(|| self.m_hat / self.m_n_oracle)
    }
}

/// Exact missing mass `Σ_j p_j 1{X_{n,j} = 0}` plus the tail bound.
pub fn missing_mass(p: &ProbabilityVector, s: &SufficientStats) -> Result<f64> {
    s.check_paired(p)?;
    let seen = compensated_sum(s.observed().iter().map(|&(j, _)| p.values[j]));
    let unseen = (p.retained_mass - seen).max(0.0);
    Ok(unseen + p.tail_mass_bound)
}

/// `E[K_{n,r}] = Σ_j C(n,r) p_j^r (1-p_j)^(n-r)` over the retained features.
pub fn expected_k_nr(p: &ProbabilityVector, n: u64, r: u64) -> Result<f64> {
    if r > n {
        return Err(domain(format!("frequency r = {r} exceeds sample size n = {n}")));
    }
    let ln_c = ln_binomial(n, r);
    let (rf, rest) = (r as f64, (n - r) as f64);
    Ok(compensated_sum(p.values.iter().map(|&pj| {
        if pj >= 1.0 {
            if r == n {
                1.0
            } else {
                0.0
            }
        } else if r == 0 {
            survival_pow(pj, rest)
        } else {
            (ln_c + rf * pj.ln() + rest * (-pj).ln_1p()).exp()
        }
    })))
}

/// `E[K_n] = Σ_j (1 - (1-p_j)^n)`.
pub fn expected_k_n(p: &ProbabilityVector, n: u64) -> f64 {
    let nf = n as f64;
    compensated_sum(p.values.iter().map(|&pj| hit_probability(pj, nf)))
}

/// `E[M_n] = Σ_j p_j (1-p_j)^n + tail_mass_bound`.
pub fn expected_m_n(p: &ProbabilityVector, n: u64) -> f64 {
    let nf = n as f64;
    compensated_sum(p.values.iter().map(|&pj| pj * survival_pow(pj, nf))) + p.tail_mass_bound
}

/// `Σ_j p_j^2 (1-p_j)^n`, the left-tail variance factor of the missing mass.
pub fn second_moment_unseen(p: &ProbabilityVector, n: u64) -> f64 {
    let nf = n as f64;
    compensated_sum(p.values.iter().map(|&pj| pj * pj * survival_pow(pj, nf)))
}

/// Exact variance of the missing mass, `Σ_j p_j^2 q_j (1 - q_j)` with `q_j = (1-p_j)^n`.
pub fn variance_m_n(p: &ProbabilityVector, n: u64) -> f64 {
    let nf = n as f64;
    compensated_sum(p.values.iter().map(|&pj| {
        let q = survival_pow(pj, nf);
        pj * pj * q * hit_probability(pj, nf)
    }))
}

/// Exact variance of `K_{n,r}`, `Σ_j π_j (1 - π_j)` with `π_j = P(X_{n,j} = r)`.
pub fn variance_k_nr(p: &ProbabilityVector, n: u64, r: u64) -> Result<f64> {
    if r > n {
        return Err(domain(format!("frequency r = {r} exceeds sample size n = {n}")));
    }
    Ok(compensated_sum(p.values.iter().map(|&pj| {
        let pi = binomial_pmf(n, r, pj);
        pi * (1.0 - pi)
    })))
}

/// Poissonized frequency count `Φ_{n,r} = Σ_j (n p_j)^r e^{-n p_j} / r!`.
pub fn phi_nr(p: &ProbabilityVector, n: u64, r: u64) -> f64 {
    let nf = n as f64;
    let ln_r_fact = statrs::function::factorial::ln_factorial(r);
    compensated_sum(p.values.iter().map(|&pj| {
        let lam = nf * pj;
        (r as f64 * lam.ln() - lam - ln_r_fact).exp()
    }))
}

/// `Φ_n = Σ_j (1 - e^{-n p_j})`.
pub fn phi_n(p: &ProbabilityVector, n: u64) -> f64 {
    let nf = n as f64;
    compensated_sum(p.values.iter().map(|&pj| -(-nf * pj).exp_m1()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(values: &[f64]) -> ProbabilityVector {
        ProbabilityVector::finite(values.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn rejects_unsorted_and_out_of_range() {
        assert!(ProbabilityVector::finite(vec![0.2, 0.5]).is_err());
        assert!(ProbabilityVector::finite(vec![1.5]).is_err());
        assert!(ProbabilityVector::finite(vec![0.0]).is_err());
        assert!(ProbabilityVector::new(vec![0.5], -1.0, None).is_err());
        assert!(ProbabilityVector::new(vec![0.5], f64::NAN, None).is_err());
    }

    #[test]
    fn missing_mass_examples() {
        let p = pv(&[0.5, 0.25]);
        let none = SufficientStats::from_dense(3, &[0, 0]).unwrap();
        assert_eq!(missing_mass(&p, &none).unwrap(), 0.75);
        let one = SufficientStats::from_dense(3, &[3, 0]).unwrap();
        assert_eq!(missing_mass(&p, &one).unwrap(), 0.25);
        let bad = SufficientStats::from_dense(3, &[1]).unwrap();
        assert!(matches!(missing_mass(&p, &bad), Err(Error::Alignment { .. })));
    }

    #[test]
    fn sufficient_stats_validation() {
        assert!(SufficientStats::from_dense(2, &[3]).is_err());
        assert!(SufficientStats::from_dense(0, &[]).is_err());
        assert!(SufficientStats::from_sparse(3, 4, vec![(2, 1), (1, 1)]).is_err());
        assert!(SufficientStats::from_sparse(3, 4, vec![(4, 1)]).is_err());
        let s = SufficientStats::from_sparse(3, 4, vec![(1, 2), (3, 3)]).unwrap();
        assert_eq!(s.to_dense(), vec![0, 2, 0, 3]);
        assert_eq!(s.count(3), 3);
        assert_eq!(s.count(0), 0);
    }

    #[test]
    fn expected_k_nr_examples() {
        let half = pv(&[0.5]);
        assert!(close(expected_k_nr(&half, 2, 1).unwrap(), 0.5, 1e-15));
        assert!(close(expected_k_nr(&half, 2, 2).unwrap(), 0.25, 1e-15));
        let p = pv(&[0.3, 0.2]);
        let oracle = 4.0 * 0.3 * 0.7f64.powi(3) + 4.0 * 0.2 * 0.8f64.powi(3);
        assert!(close(oracle, 0.8212, 1e-12));
        assert!(close(expected_k_nr(&p, 4, 1).unwrap(), oracle, 1e-14));
        assert!(matches!(expected_k_nr(&p, 2, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn expected_k_n_examples() {
        assert_eq!(expected_k_n(&pv(&[1.0]), 7), 1.0);
        assert!(close(expected_k_n(&pv(&[0.5]), 2), 0.75, 1e-15));
        assert!(close(expected_k_n(&pv(&[0.5, 0.25]), 3), 1.453125, 1e-15));
    }

    #[test]
    fn expected_m_n_examples() {
        assert_eq!(expected_m_n(&pv(&[1.0]), 5), 0.0);
        assert!(close(expected_m_n(&pv(&[0.5]), 1), 0.25, 1e-15));
        let oracle = 0.3 * 0.7f64.powi(4) + 0.2 * 0.8f64.powi(4);
        assert!((oracle - 0.15395).abs() < 1e-12);
        assert!(close(expected_m_n(&pv(&[0.3, 0.2]), 4), oracle, 1e-14));
    }

    #[test]
    fn phi_examples() {
        let half = pv(&[0.5]);
        let e1 = (-1f64).exp();
        assert!(close(phi_nr(&half, 2, 1), e1, 1e-15));
        assert!(close(phi_nr(&half, 2, 3), e1 / 6.0, 1e-14));
        assert!(close(phi_n(&half, 2), 1.0 - e1, 1e-15));
        let oracle = (1.0 - (-2f64).exp()) + (1.0 - (-1f64).exp());
        assert!(close(phi_n(&pv(&[0.5, 0.25]), 4), oracle, 1e-15));
        assert!(close(oracle, 1.496785, 1e-6));
    }

    #[test]
    fn statistics_record_ratio() {
        let rec = StatisticsRecord {
            n: 4,
            k_n: 2,
            k_nr: vec![1, 1],
            m_n_oracle: 0.0,
            m_hat: 0.25,
            tail_mass_bound: 0.0,
        };
        assert_eq!(rec.estimator_ratio(), None);
        assert_eq!(rec.k(1), 1);
        assert_eq!(rec.k(7), 0);
    }
}
