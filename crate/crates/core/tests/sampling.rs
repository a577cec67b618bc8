//! Distributional checks of the samplers against exact laws.

use featmass::generators::{gamma_process_jumps, probabilities_from_jumps};
use featmass::sampler::derive_seed;
use featmass::special::{binomial_pmf, integrate};
use featmass::stats::{ks_distance, Summary};
use featmass::{
    expected_k_n, expected_k_nr, expected_m_n, finite_uniform, run_replicates, sample_counts,
    Execution, GammaProcessSpec, ProbabilitySource, ProbabilityVector,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn chi_square_p_value(observed: &[u64], expected: &[f64]) -> f64 {
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    let dof = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

#[test]
fn per_feature_counts_are_binomial() {
    let p = ProbabilityVector::finite(vec![0.6, 0.3, 0.05, 0.001]).unwrap();
    let n = 12u64;
    let draws = 20_000u64;
    let mut hist = vec![vec![0u64; n as usize + 1]; p.len()];
    for i in 0..draws {
        let s = sample_counts(&p, n, derive_seed(99, i)).unwrap();
        for (j, c) in s.to_dense().into_iter().enumerate() {
            hist[j][c as usize] += 1;
        }
    }
    for (j, &pj) in p.values().iter().enumerate() {
        // pool cells with expectation below 5 into the last used cell
        let mut obs = Vec::new();
        let mut exp = Vec::new();
        let (mut po, mut pe) = (0u64, 0.0);
        for r in 0..=n {
            po += hist[j][r as usize];
            pe += draws as f64 * binomial_pmf(n, r, pj);
            if pe >= 5.0 {
                obs.push(po);
                exp.push(pe);
                po = 0;
                pe = 0.0;
            }
        }
        if let (Some(o), Some(e)) = (obs.last_mut(), exp.last_mut()) {
            *o += po;
            *e += pe;
        }
        if obs.len() < 2 {
            continue;
        }
        let pv = chi_square_p_value(&obs, &exp);
        assert!(pv > 1e-4, "feature {j}: p-value {pv}");
    }
}

#[test]
fn replicate_means_match_exact_moments() {
    let p = ProbabilityVector::finite(vec![0.7, 0.4, 0.2, 0.05]).unwrap();
    let grid = [1u64, 2, 3, 4];
    let ds = run_replicates(
        &ProbabilitySource::Fixed(p.clone()),
        &grid,
        100_000,
        5,
        4,
        Execution::Parallel,
    )
    .unwrap();
    for &n in &grid {
        let recs: Vec<_> = ds.at(n).collect();
        let m = Summary::of(&recs.iter().map(|r| r.m_n_oracle).collect::<Vec<_>>());
        let k = Summary::of(&recs.iter().map(|r| r.k_n as f64).collect::<Vec<_>>());
        let k1 = Summary::of(&recs.iter().map(|r| r.k(1) as f64).collect::<Vec<_>>());
        assert!((m.mean - expected_m_n(&p, n)).abs() <= 4.0 * m.std_error());
        assert!((k.mean - expected_k_n(&p, n)).abs() <= 4.0 * k.std_error());
        let e1 = expected_k_nr(&p, n, 1).unwrap();
        assert!((k1.mean - e1).abs() <= 4.0 * k1.std_error());
    }
}

#[test]
fn uniform_missing_mass_distribution() {
    // M_n = p · #unseen with #unseen ~ Binomial(J, (1-p)^n)
    let p = finite_uniform(50, 0.1).unwrap();
    let n = 20u64;
    let q = 0.9f64.powi(20);
    let draws = 20_000;
    let mut hist = vec![0u64; 51];
    for i in 0..draws {
        let s = sample_counts(&p, n, derive_seed(3, i)).unwrap();
        hist[50 - s.observed().len()] += 1;
    }
    let expected: Vec<f64> = (0..=50u64)
        .map(|k| draws as f64 * binomial_pmf(50, k, q))
        .collect();
    let (obs, exp): (Vec<u64>, Vec<f64>) = hist
        .iter()
        .zip(&expected)
        .filter(|(_, &e)| e >= 5.0)
        .map(|(&o, &e)| (o, e))
        .unzip();
    assert!(chi_square_p_value(&obs, &exp) > 1e-4);
}

#[test]
fn gamma_jump_count_matches_campbell_mean() {
    // E[#jumps >= ε] = ∫_ε^∞ e^{-s(1+t)}/s ds, evaluated independently by quadrature in ln s
    for &(eps, tilt) in &[(1e-6, 0u64), (1e-4, 10)] {
        let spec = GammaProcessSpec {
            jump_truncation: eps,
            tilt,
        };
        let rate = 1.0 + tilt as f64;
        let lo = f64::ln(eps);
        let hi = f64::ln(60.0 / rate);
        let mean = integrate(|u| (-u.exp() * rate).exp(), lo, hi, 400);
        let draws = 4000u64;
        let counts: Vec<f64> = (0..draws)
            .map(|i| gamma_process_jumps(&spec, derive_seed(17, i)).unwrap().len() as f64)
            .collect();
        let s = Summary::of(&counts);
        assert!((mean - spec.expected_jump_count()).abs() < 1e-8 * mean);
        // counts are Poisson, so the variance equals the mean
        let se = (mean / draws as f64).sqrt();
        assert!((s.mean - mean).abs() <= 4.0 * se, "{} vs {mean}", s.mean);
    }
}

#[test]
fn gamma_total_mass_is_exponential() {
    for &tilt in &[0u64, 10] {
        let spec = GammaProcessSpec {
            jump_truncation: 1e-10,
            tilt,
        };
        let totals: Vec<f64> = (0..4000u64)
            .map(|i| gamma_process_jumps(&spec, derive_seed(23, i)).unwrap().iter().sum())
            .collect();
        let rate = 1.0 + tilt as f64;
        let d = ks_distance(&totals, |x| 1.0 - (-rate * x).exp());
        // 99.9% Kolmogorov critical value at m = 4000
        assert!(d < 1.95 / 4000f64.sqrt(), "tilt={tilt} ks={d}");
    }
}

#[test]
fn gamma_probabilities_are_valid() {
    let spec = GammaProcessSpec {
        jump_truncation: 1e-10,
        tilt: 0,
    };
    let jumps = gamma_process_jumps(&spec, 4).unwrap();
    let p = probabilities_from_jumps(&spec, &jumps).unwrap();
    assert_eq!(p.len(), jumps.len());
    assert!(p.values().iter().all(|&v| v > 0.0 && v < 1.0));
    assert_eq!(p.tail_mass_bound(), 1e-10);
}
