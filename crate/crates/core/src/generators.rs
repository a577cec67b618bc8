//! Constructors for feature-probability sequences.
//!
//! Regularly-varying power laws with an optional `(1 + ln j)^β` correction,
//! two contrast families, and Ferguson–Klass draws from a (possibly tilted)
//! gamma-process prior.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{ProbabilityVector, TailDescriptor};
use crate::special::{exp_integral_e1, inverse_e1};

/// Hard cap on materialized features.
pub const MAX_FEATURES: usize = 1 << 27;

/// Power law `p_j = scale * j^(-1/alpha) * (1 + ln j)^log_exponent`,
/// retained while `p_j >= truncation_threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegVarSpec {
    pub alpha: f64,
    pub scale: f64,
    #[serde(default)]
    pub log_exponent: f64,
    pub truncation_threshold: f64,
}

impl RegVarSpec {
    pub fn pure(alpha: f64, scale: f64, truncation_threshold: f64) -> Self {
        Self {
            alpha,
            scale,
            log_exponent: 0.0,
            truncation_threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(domain(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(domain(format!("scale = {} must be positive", self.scale)));
        }
        if self.scale > 1.0 {
            return Err(domain(format!(
                "scale = {} gives p_1 > 1",
                self.scale
            )));
        }
        if !self.log_exponent.is_finite() {
            return Err(domain("log_exponent must be finite"));
        }
        // d/dj ln p_j < 0 for all j >= 1 iff 1 > alpha * beta
        if self.alpha * self.log_exponent >= 1.0 {
            return Err(domain(format!(
                "log_exponent = {} makes the sequence non-monotone (need alpha * log_exponent < 1)",
                self.log_exponent
            )));
        }
        if !(self.truncation_threshold > 0.0) || !self.truncation_threshold.is_finite() {
            return Err(domain(format!(
                "truncation_threshold = {} must be positive",
                self.truncation_threshold
            )));
        }
        Ok(())
    }

    /// Continuous-index probability `p(x)`.
    #[inline]
    pub fn probability_at(&self, x: f64) -> f64 {
        let base = self.scale * x.powf(-1.0 / self.alpha);
        if self.log_exponent == 0.0 {
            base
        } else {
            base * (1.0 + x.ln()).powf(self.log_exponent)
        }
    }

    /// Certified upper bound on `Σ_{j > count} p_j`.
    ///
    /// Uses `Σ_{j>J} p_j <= ∫_J^∞ p(x) dx` (p decreasing) and, for `β > 0`,
    /// `(1 + ln x)^β <= (1 + ln J)^β (x/J)^{β/(1 + ln J)}`.
    pub fn tail_bound(&self, count: usize) -> f64 {
        let j = (count.max(1)) as f64;
        let a = 1.0 / self.alpha;
        let log_factor = (1.0 + j.ln()).powf(self.log_exponent);
        let delta = if self.log_exponent > 0.0 {
            self.log_exponent / (1.0 + j.ln())
        } else {
            0.0
        };
        let decay = a - 1.0 - delta;
        if decay <= 0.0 {
            return f64::INFINITY;
        }
        self.scale * log_factor * j.powf(1.0 - a) / decay
    }
}

/// Gamma-process prior with Lévy intensity `e^{-s(1 + tilt)} / s`,
/// jumps below `jump_truncation` discarded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaProcessSpec {
    pub jump_truncation: f64,
    #[serde(default)]
    pub tilt: u64,
}

impl GammaProcessSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.jump_truncation > 0.0) || !self.jump_truncation.is_finite() {
            return Err(domain(format!(
                "jump_truncation = {} must be positive",
                self.jump_truncation
            )));
        }
        Ok(())
    }

    fn rate(&self) -> f64 {
        1.0 + self.tilt as f64
    }

    /// Lévy tail `ρ̄(x) = ∫_x^∞ e^{-s(1+tilt)}/s ds = E1((1+tilt) x)`.
    pub fn levy_tail(&self, x: f64) -> f64 {
        exp_integral_e1(self.rate() * x)
    }

    /// Mean number of retained jumps, `ρ̄(ε)`.
    pub fn expected_jump_count(&self) -> f64 {
        self.levy_tail(self.jump_truncation)
    }
}

pub fn power_law(spec: &RegVarSpec) -> Result<ProbabilityVector> {
    spec.validate()?;
    let mut values = Vec::new();
    let mut j = 1usize;
    loop {
        let p = spec.probability_at(j as f64);
        if p < spec.truncation_threshold {
            break;
        }
        if values.len() >= MAX_FEATURES {
            return Err(domain(format!(
                "truncation_threshold = {} retains more than {MAX_FEATURES} features",
                spec.truncation_threshold
            )));
        }
        values.push(p);
        j += 1;
    }
    let tail = spec.tail_bound(values.len());
    ProbabilityVector::new(
        values,
        tail,
        Some(TailDescriptor::PowerLaw {
            alpha: spec.alpha,
            scale: spec.scale,
            log_exponent: spec.log_exponent,
        }),
    )
}

/// `p_j = q^j` retained while `p_j >= truncation_threshold`.
pub fn geometric(q: f64, truncation_threshold: f64) -> Result<ProbabilityVector> {
    if !(q > 0.0 && q < 1.0) {
        return Err(domain(format!("geometric ratio q = {q} must lie in (0, 1)")));
    }
    if !(truncation_threshold > 0.0) {
        return Err(domain("truncation_threshold must be positive"));
    }
    let mut values = Vec::new();
    let mut j = 1i32;
    loop {
        let p = q.powi(j);
        if p < truncation_threshold || values.len() >= MAX_FEATURES {
            break;
        }
        values.push(p);
        j += 1;
    }
    let tail = q.powi(values.len() as i32 + 1) / (1.0 - q);
    ProbabilityVector::new(values, tail, Some(TailDescriptor::Geometric { ratio: q }))
}

/// `count` copies of `p`, no tail.
pub fn finite_uniform(count: usize, p: f64) -> Result<ProbabilityVector> {
    if count == 0 {
        return Err(domain("finite_uniform needs at least one feature"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(domain(format!("probability p = {p} must lie in (0, 1]")));
    }
    ProbabilityVector::new(vec![p; count], 0.0, Some(TailDescriptor::FiniteUniform))
}

/// Ferguson–Klass jumps `s_1 > s_2 > ... >= ε` of the gamma process.
///
/// Arrival times `Γ_k` of a unit-rate Poisson process are mapped through the
/// inverse Lévy tail; generation stops once `Γ_k > ρ̄(ε)`.
pub fn gamma_process_jumps(spec: &GammaProcessSpec, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = spec.rate();
    let lower = rate * spec.jump_truncation;
    let horizon = exp_integral_e1(lower);
    let mut jumps = Vec::new();
    let mut arrival = 0.0f64;
    loop {
        let step: f64 = Exp1.sample(&mut rng);
        arrival += step;
        if arrival > horizon {
            break;
        }
        let y = inverse_e1(arrival, lower)?;
        let s = y / rate;
        if s < spec.jump_truncation {
            break;
        }
        jumps.push(s);
    }
    // bisection tolerance can tie two arrivals that are closer than 1e-12
    for w in jumps.windows(2) {
        if w[1] > w[0] {
            return Err(Error::Numeric("Ferguson–Klass jumps not monotone".into()));
        }
    }
    Ok(jumps)
}

/// Feature probabilities `p_k = 1 - e^{-s_k}` of a gamma-process draw.
pub fn gamma_process_draw(spec: &GammaProcessSpec, seed: u64) -> Result<ProbabilityVector> {
    let jumps = gamma_process_jumps(spec, seed)?;
    probabilities_from_jumps(spec, &jumps)
}

pub fn probabilities_from_jumps(spec: &GammaProcessSpec, jumps: &[f64]) -> Result<ProbabilityVector> {
    let values = jumps.iter().map(|&s| -(-s).exp_m1()).collect();
    ProbabilityVector::new(
        values,
        spec.jump_truncation,
        Some(TailDescriptor::GammaProcess {
            jump_truncation: spec.jump_truncation,
            tilt: spec.tilt,
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_truncation_count() {
        let p = power_law(&RegVarSpec::pure(0.5, 0.1, 1e-12)).unwrap();
        assert_eq!(p.len(), 316_227);
        assert_eq!(p.values()[0], 0.1);
        assert!((p.values()[9] - 0.001).abs() < 1e-18);
    }

    #[test]
    fn pure_power_law_has_constant_scaled_values() {
        for &alpha in &[0.25, 0.5, 0.75] {
            let p = power_law(&RegVarSpec::pure(alpha, 0.3, 1e-7)).unwrap();
            for (j, &v) in p.values().iter().enumerate() {
                let scaled = v * ((j + 1) as f64).powf(1.0 / alpha);
                assert!((scaled / 0.3 - 1.0).abs() < 1e-9);
            }
            let v = p.values();
            for j in 1..v.len() / 2 {
                let ratio = v[2 * j - 1] / v[j - 1];
                assert!((ratio - 2f64.powf(-1.0 / alpha)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn power_law_domain_errors() {
        assert!(power_law(&RegVarSpec::pure(1.5, 0.1, 1e-6)).is_err());
        assert!(power_law(&RegVarSpec::pure(0.5, 1.5, 1e-6)).is_err());
        let wiggly = RegVarSpec {
            alpha: 0.5,
            scale: 0.1,
            log_exponent: 3.0,
            truncation_threshold: 1e-6,
        };
        assert!(power_law(&wiggly).is_err());
    }

    #[test]
    fn power_law_tail_bound_dominates_partial_tail() {
        for &beta in &[0.0, 0.8, -1.0] {
            let spec = RegVarSpec {
                alpha: 0.5,
                scale: 0.1,
                log_exponent: beta,
                truncation_threshold: 1e-6,
            };
            let p = power_law(&spec).unwrap();
            let j0 = p.len();
            let partial: f64 = (j0 + 1..j0 * 200)
                .map(|j| spec.probability_at(j as f64))
                .sum();
            assert!(partial <= p.tail_mass_bound(), "beta={beta}");
        }
    }

    #[test]
    fn geometric_examples() {
        let g = geometric(0.5, 1e-6).unwrap();
        assert_eq!(g.len(), 19);
        assert!((g.tail_mass_bound() - 2f64.powi(-20) / 0.5).abs() < 1e-20);
        assert!((g.total_mass_bound() - 1.0).abs() < 1e-12);
        assert_eq!(geometric(0.01, 1e-6).unwrap().len(), 3);
        assert!(geometric(1.0, 1e-6).is_err());
    }

    #[test]
    fn finite_uniform_examples() {
        assert_eq!(finite_uniform(1, 1.0).unwrap().values(), &[1.0]);
        assert_eq!(finite_uniform(3, 0.2).unwrap().values(), &[0.2, 0.2, 0.2]);
        let p = finite_uniform(100, 0.01).unwrap();
        assert!((crate::model::expected_k_n(&p, 1) - 1.0).abs() < 1e-12);
        assert!(finite_uniform(0, 0.5).is_err());
    }

    #[test]
    fn gamma_draw_is_reproducible_and_decreasing() {
        let spec = GammaProcessSpec {
            jump_truncation: 1e-10,
            tilt: 0,
        };
        let a = gamma_process_jumps(&spec, 7).unwrap();
        let b = gamma_process_jumps(&spec, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] > w[1]));
        assert!(a.iter().all(|&s| s >= 1e-10));
        let p = gamma_process_draw(&spec, 7).unwrap();
        assert_eq!(p.len(), a.len());
        assert_eq!(p.tail_mass_bound(), 1e-10);
    }
}
