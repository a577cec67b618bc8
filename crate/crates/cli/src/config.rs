//! Experiment configuration: a TOML file, validated in full before any
//! computation starts.

use std::fmt;

use featmass::generators::{finite_uniform, geometric, power_law, GammaProcessSpec, RegVarSpec};
use featmass::inconsistency::DEFAULT_JUMP_TRUNCATION;
use featmass::ProbabilityVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Moments,
    Simulate,
    Bounds,
    Karlin,
    Consistency,
    Inconsistency,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Moments,
        Experiment::Simulate,
        Experiment::Bounds,
        Experiment::Karlin,
        Experiment::Consistency,
        Experiment::Inconsistency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Moments => "moments",
            Experiment::Simulate => "simulate",
            Experiment::Bounds => "bounds",
            Experiment::Karlin => "karlin",
            Experiment::Consistency => "consistency",
            Experiment::Inconsistency => "inconsistency",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Probability family, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    PowerLaw {
        alpha: f64,
        scale: f64,
        #[serde(default)]
        log_exponent: f64,
        truncation_threshold: f64,
    },
    Geometric {
        ratio: f64,
        truncation_threshold: f64,
    },
    FiniteUniform {
        count: usize,
        p: f64,
    },
    GammaProcess {
        #[serde(default = "default_jump_truncation")]
        jump_truncation: f64,
        #[serde(default)]
        tilt: u64,
    },
}

fn default_jump_truncation() -> f64 {
    DEFAULT_JUMP_TRUNCATION
}

impl Family {
    pub fn kind(&self) -> &'static str {
        match self {
            Family::PowerLaw { .. } => "power_law",
            Family::Geometric { .. } => "geometric",
            Family::FiniteUniform { .. } => "finite_uniform",
            Family::GammaProcess { .. } => "gamma_process",
        }
    }

    pub fn reg_var_spec(&self) -> Option<RegVarSpec> {
        match *self {
            Family::PowerLaw {
                alpha,
                scale,
                log_exponent,
                truncation_threshold,
            } => Some(RegVarSpec {
                alpha,
                scale,
                log_exponent,
                truncation_threshold,
            }),
            _ => None,
        }
    }

    pub fn gamma_spec(&self) -> Option<GammaProcessSpec> {
        match *self {
            Family::GammaProcess {
                jump_truncation,
                tilt,
            } => Some(GammaProcessSpec {
                jump_truncation,
                tilt,
            }),
            _ => None,
        }
    }

    /// The fixed probability vector, or `None` for random (gamma-process) families.
    pub fn build(&self) -> featmass::Result<Option<ProbabilityVector>> {
        match *self {
            Family::PowerLaw { .. } => power_law(&self.reg_var_spec().unwrap()).map(Some),
            Family::Geometric {
                ratio,
                truncation_threshold,
            } => geometric(ratio, truncation_threshold).map(Some),
            Family::FiniteUniform { count, p } => finite_uniform(count, p).map(Some),
            Family::GammaProcess { .. } => {
                self.gamma_spec().unwrap().validate()?;
                Ok(None)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub n_grid: Vec<u64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Largest frequency `r` tracked in `K_{n,r}`.
    #[serde(default = "default_max_frequency")]
    pub max_frequency: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Missing-mass deviations for `bounds`; defaults to 0..5 sd of `M_n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_grid: Option<Vec<f64>>,
    /// `K_{n,1}` deviations for `bounds`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_grid: Option<Vec<f64>>,
    /// Prefix of every report file; defaults to the experiment name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_stem: Option<String>,
    pub family: Family,
}

fn default_replicates() -> usize {
    1000
}

fn default_max_frequency() -> usize {
    featmass::sampler::DEFAULT_MAX_FREQUENCY
}

fn default_epsilon() -> f64 {
    0.1
}

/// Largest seed a TOML integer can carry.
pub const MAX_SEED: u64 = i64::MAX as u64;

const MAX_FREQUENCY_LIMIT: usize = 1000;

fn field_error(field: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn check_increasing(field: &str, grid: &[f64]) -> Result<(), CliError> {
    if grid.is_empty() {
        return Err(field_error(field, "must not be empty"));
    }
    if grid.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(field_error(
            field,
            "entries must be finite and non-negative",
        ));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(field_error(field, "must be strictly increasing"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn stem(&self) -> &str {
        self.output_stem
            .as_deref()
            .unwrap_or(self.experiment.name())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Check every field and build the probability vector (if fixed).
    pub fn validate(&self) -> Result<Option<ProbabilityVector>, CliError> {
        if self.n_grid.is_empty() {
            return Err(field_error("n_grid", "must not be empty"));
        }
        if self.n_grid[0] == 0 {
            return Err(field_error("n_grid", "entries must be positive"));
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(field_error("n_grid", "must be strictly increasing"));
        }
        if self.replicates == 0 {
            return Err(field_error("replicates", "must be at least 1"));
        }
        if self.master_seed > MAX_SEED {
            return Err(field_error(
                "master_seed",
                format!("must be at most {MAX_SEED}"),
            ));
        }
        if self.max_frequency == 0 || self.max_frequency > MAX_FREQUENCY_LIMIT {
            return Err(field_error(
                "max_frequency",
                format!("must lie in 1..={MAX_FREQUENCY_LIMIT}"),
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(field_error("epsilon", "must lie in (0, 1)"));
        }
        if let Some(g) = &self.x_grid {
            check_increasing("x_grid", g)?;
        }
        if let Some(g) = &self.k_grid {
            check_increasing("k_grid", g)?;
        }
        if let Some(stem) = &self.output_stem {
            if stem.is_empty() || stem.contains(['/', '\\']) || stem.starts_with('.') {
                return Err(field_error(
                    "output_stem",
                    "must be a plain file-name prefix",
                ));
            }
        }
        let p = self
            .family
            .build()
            .map_err(|e| field_error(&format!("family ({})", self.family.kind()), e))?;
        let random = p.is_none();
        match self.experiment {
            Experiment::Moments | Experiment::Bounds | Experiment::Karlin if random => {
                return Err(field_error(
                    "family",
                    format!("{} needs a fixed probability vector", self.experiment),
                ));
            }
            Experiment::Bounds if self.n_grid[0] <= 2 => {
                return Err(field_error("n_grid", "bounds need every n > 2"));
            }
            Experiment::Karlin if self.family.reg_var_spec().is_none() => {
                return Err(field_error("family", "karlin needs kind = \"power_law\""));
            }
            Experiment::Inconsistency => {
                if !random {
                    return Err(field_error(
                        "family",
                        "inconsistency needs kind = \"gamma_process\"",
                    ));
                }
                if self.replicates < 100 {
                    return Err(field_error(
                        "replicates",
                        "inconsistency needs at least 100 prior draws",
                    ));
                }
                if self.epsilon >= 1.0 / 6.0 {
                    return Err(field_error(
                        "epsilon",
                        "inconsistency needs epsilon in (0, 1/6)",
                    ));
                }
            }
            _ => {}
        }
        Ok(p)
    }
}
