//! Simulation and verification laboratory for missing-mass estimation in
//! Bernoulli product feature models.
//!
//! Each observation displays feature `j` independently with probability
//! `p_j`. After `n` observations the missing mass `M_n` is the total
//! probability of the features not yet seen, and `M̂_n = K_{n,1}/n` (the
//! number of features seen exactly once, divided by `n`) estimates it.
//!
//! Modules:
//! - [`model`]: domain types and exact expectations,
//! - [`generators`]: probability families (power laws, gamma-process draws),
//! - [`sampler`]: seed-deterministic Monte Carlo replicates,
//! - [`bounds`]: concentration bounds and their empirical validation,
//! - [`asymptotics`]: regular-variation asymptotics and consistency diagnostics,
//! - [`inconsistency`]: the gamma-process counterexample experiment.

pub mod asymptotics;
pub mod bounds;
pub mod error;
pub mod exec;
pub mod generators;
pub mod inconsistency;
pub mod model;
pub mod sampler;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use exec::{with_threads, Execution};
pub use generators::{
    finite_uniform, gamma_process_draw, geometric, power_law, GammaProcessSpec, RegVarSpec,
};
pub use model::{
    expected_k_n, expected_k_nr, expected_m_n, missing_mass, phi_n, phi_nr, ProbabilityVector,
    StatisticsRecord, SufficientStats, TailDescriptor,
};
pub use sampler::{
    run_replicates, sample_counts, sample_trajectory, summarize, ProbabilitySource,
    ReplicateDataset,
};
