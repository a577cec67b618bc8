//! Monte Carlo simulation of the Bernoulli product model.
//!
//! Counts are drawn sparsely. For a non-increasing sequence the per-feature
//! hit probabilities `q_j = 1 - (1 - p_j)^n` are non-increasing as well, so
//! the features with `X_{n,j} >= 1` can be found by geometric skipping with a
//! running dominating rate followed by thinning, and each hit feature then
//! receives an exact zero-truncated binomial count. The work per replicate
//! is proportional to the number of observed features instead of `J`.
//!
//! Seeds: replicate `i` of a run with master seed `s` uses
//! [`derive_seed`]`(s, i)`, a SplitMix64 finalizer applied to
//! `s + (i + 1) * 0x9E3779B97F4A7C15`. This mapping is fixed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::exec::Execution;
use crate::generators::{gamma_process_draw, GammaProcessSpec};
use crate::model::{ProbabilityVector, StatisticsRecord, SufficientStats};
use crate::special::{compensated_sum, hit_probability};

/// Default number of tracked frequencies `R`.
pub const DEFAULT_MAX_FREQUENCY: usize = 10;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable per-stream seed for `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Where the feature probabilities of each replicate come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbabilitySource {
    /// One fixed sequence shared by all replicates.
    Fixed(ProbabilityVector),
    /// A fresh gamma-process draw per replicate.
    GammaProcess(GammaProcessSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub stats: StatisticsRecord,
}

/// Deterministic output of [`run_replicates`], ordered by replicate then `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateDataset {
    pub config_digest: Option<String>,
    pub master_seed: u64,
    pub n_grid: Vec<u64>,
    pub replicates: usize,
    pub max_frequency: usize,
    pub records: Vec<ReplicateRecord>,
}

impl ReplicateDataset {
    /// Records at sample size `n`, in replicate order.
    pub fn at(&self, n: u64) -> impl Iterator<Item = &StatisticsRecord> + '_ {
        self.records
            .iter()
            .filter(move |r| r.stats.n == n)
            .map(|r| &r.stats)
    }
}

fn zero_truncated_binomial<R: Rng + ?Sized>(
    trials: u64,
    p: f64,
    hit: f64,
    rng: &mut R,
) -> u64 {
    if hit >= 0.25 {
        let dist = Binomial::new(trials, p.min(1.0)).expect("valid binomial parameters");
        loop {
            let x = dist.sample(rng);
            if x > 0 {
                return x;
            }
        }
    }
    // Inversion on the zero-truncated pmf; the mean is below one here.
    let u = rng.random::<f64>() * hit;
    let ln_pmf1 = (trials as f64).ln() + p.ln() + (trials - 1) as f64 * (-p).ln_1p();
    let mut pmf = ln_pmf1.exp();
    let mut cdf = pmf;
    let odds = p / (1.0 - p);
    let mut k = 1u64;
    while cdf < u && k < trials {
        pmf *= (trials - k) as f64 / (k + 1) as f64 * odds;
        k += 1;
        cdf += pmf;
        if pmf == 0.0 {
            break;
        }
    }
    k
}

/// Append `(j, X_j)` for every `j` with `X_j ~ Binomial(trials, p_j) >= 1`.
fn draw_sparse_counts<R: Rng + ?Sized>(
    values: &[f64],
    trials: u64,
    rng: &mut R,
    out: &mut Vec<(usize, u64)>,
) {
    if trials == 0 {
        return;
    }
    let t = trials as f64;
    let len = values.len();
    let mut j = 0usize;
    while j < len {
        // every index >= j has hit probability <= bound
        let bound = hit_probability(values[j], t);
        if bound <= 0.0 {
            break;
        }
        if bound < 1.0 {
            let u = 1.0 - rng.random::<f64>();
            let skip = (u.ln() / (-bound).ln_1p()).floor();
            if skip >= (len - j) as f64 {
                break;
            }
            j += skip as usize;
        }
        let pj = values[j];
        let hit = hit_probability(pj, t);
        let accept = hit >= bound || rng.random::<f64>() * bound < hit;
        if accept {
            out.push((j, zero_truncated_binomial(trials, pj, hit, rng)));
        }
        j += 1;
    }
}

/// Independent `X_{n,j} ~ Binomial(n, p_j)`, deterministic in `seed`.
pub fn sample_counts(p: &ProbabilityVector, n: u64, seed: u64) -> Result<SufficientStats> {
    if n == 0 {
        return Err(domain("sample size n must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut observed = Vec::new();
    draw_sparse_counts(p.values(), n, &mut rng, &mut observed);
    SufficientStats::from_sparse(n, p.len(), observed)
}

fn summarize_sparse(
    p: &ProbabilityVector,
    n: u64,
    observed: &[(usize, u64)],
    max_frequency: usize,
) -> StatisticsRecord {
    let mut k_nr = vec![0u64; max_frequency];
    for &(_, c) in observed {
        if let Some(slot) = k_nr.get_mut(c as usize - 1) {
            *slot += 1;
        }
    }
    let values = p.values();
    let seen = compensated_sum(observed.iter().map(|&(j, _)| values[j]));
    let m_n_oracle = (p.retained_mass() - seen).max(0.0) + p.tail_mass_bound();
    let singletons = k_nr.first().copied().unwrap_or_else(|| {
        observed.iter().filter(|&&(_, c)| c == 1).count() as u64
    });
    StatisticsRecord {
        n,
        k_n: observed.len() as u64,
        k_nr,
        m_n_oracle,
        m_hat: singletons as f64 / n as f64,
        tail_mass_bound: p.tail_mass_bound(),
    }
}

/// `K_n`, `K_{n,1..R}`, oracle missing mass and `K_{n,1}/n` for one sample.
pub fn summarize(
    p: &ProbabilityVector,
    s: &SufficientStats,
    max_frequency: usize,
) -> Result<StatisticsRecord> {
    if max_frequency == 0 {
        return Err(domain("max_frequency R must be positive"));
    }
    if s.len() != p.len() {
        return Err(Error::Alignment {
            what: "counts",
            expected: p.len(),
            found: s.len(),
        });
    }
    Ok(summarize_sparse(p, s.n(), s.observed(), max_frequency))
}

fn check_grid(n_grid: &[u64]) -> Result<()> {
    if n_grid.is_empty() {
        return Err(domain("n_grid must not be empty"));
    }
    if n_grid[0] == 0 {
        return Err(domain("n_grid entries must be positive"));
    }
    if n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain("n_grid must be strictly increasing"));
    }
    Ok(())
}

fn merge_counts(state: &[(usize, u64)], increment: &[(usize, u64)]) -> Vec<(usize, u64)> {
    let mut merged = Vec::with_capacity(state.len() + increment.len());
    let (mut a, mut b) = (0, 0);
    while a < state.len() && b < increment.len() {
        let (ja, ca) = state[a];
        let (jb, cb) = increment[b];
        match ja.cmp(&jb) {
            std::cmp::Ordering::Less => {
                merged.push((ja, ca));
                a += 1;
            }
            std::cmp::Ordering::Greater => {
                merged.push((jb, cb));
                b += 1;
            }
            std::cmp::Ordering::Equal => {
                merged.push((ja, ca + cb));
                a += 1;
                b += 1;
            }
        }
    }
    merged.extend_from_slice(&state[a..]);
    merged.extend_from_slice(&increment[b..]);
    merged
}

fn trajectory_with_rng<R: Rng + ?Sized>(
    p: &ProbabilityVector,
    n_grid: &[u64],
    max_frequency: usize,
    rng: &mut R,
) -> Vec<StatisticsRecord> {
    let mut state: Vec<(usize, u64)> = Vec::new();
    let mut increment = Vec::new();
    let mut current = 0u64;
    let mut out = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        increment.clear();
        draw_sparse_counts(p.values(), n - current, rng, &mut increment);
        state = merge_counts(&state, &increment);
        current = n;
        out.push(summarize_sparse(p, n, &state, max_frequency));
    }
    out
}

/// One growing sample observed at every `n` in `n_grid`.
///
/// Between consecutive grid points each feature receives an independent
/// `Binomial(Δn, p_j)` increment, which is the exact law of adding `Δn`
/// Bernoulli rows.
pub fn sample_trajectory(
    p: &ProbabilityVector,
    n_grid: &[u64],
    seed: u64,
    max_frequency: usize,
) -> Result<Vec<StatisticsRecord>> {
    check_grid(n_grid)?;
    if max_frequency == 0 {
        return Err(domain("max_frequency R must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(trajectory_with_rng(p, n_grid, max_frequency, &mut rng))
}

fn replicate(
    source: &ProbabilitySource,
    n_grid: &[u64],
    max_frequency: usize,
    seed: u64,
) -> Result<Vec<StatisticsRecord>> {
    match source {
        ProbabilitySource::Fixed(p) => sample_trajectory(p, n_grid, seed, max_frequency),
        ProbabilitySource::GammaProcess(spec) => {
            let p = gamma_process_draw(spec, derive_seed(seed, 0))?;
            sample_trajectory(&p, n_grid, derive_seed(seed, 1), max_frequency)
        }
    }
}

/// `m` independent trajectories merged in replicate order.
pub fn run_replicates(
    source: &ProbabilitySource,
    n_grid: &[u64],
    m: usize,
    master_seed: u64,
    max_frequency: usize,
    exec: Execution,
) -> Result<ReplicateDataset> {
    check_grid(n_grid)?;
    if m == 0 {
        return Err(domain("replicate count m must be at least 1"));
    }
    if max_frequency == 0 {
        return Err(domain("max_frequency R must be positive"));
    }
    let per_replicate = exec.map_indexed(m, |i| {
        replicate(source, n_grid, max_frequency, derive_seed(master_seed, i as u64))
    });
    let mut records = Vec::with_capacity(m * n_grid.len());
    for (i, result) in per_replicate.into_iter().enumerate() {
        for stats in result? {
            records.push(ReplicateRecord {
                replicate: i,
                stats,
            });
        }
    }
    Ok(ReplicateDataset {
        config_digest: None,
        master_seed,
        n_grid: n_grid.to_vec(),
        replicates: m,
        max_frequency,
        records,
    })
}
