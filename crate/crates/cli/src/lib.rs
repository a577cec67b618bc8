//! Config-driven experiment runner for the `featmass` laboratory.
//!
//! A run reads one TOML file, validates it completely, computes in memory,
//! and only then writes its CSV/JSON reports into the output directory.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

use std::path::{Path, PathBuf};

pub use config::{Experiment, ExperimentConfig, Family};
pub use error::CliError;

use error::{EXIT_OK, EXIT_VIOLATION};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "FEATMASS_OUT_DIR";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    /// Worker threads; 0 picks the machine default.
    pub threads: usize,
    /// Subcommand used, if it names an experiment; must match the config.
    pub expect: Option<Experiment>,
}

#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub violations: usize,
    pub summary: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        if self.violations > 0 {
            EXIT_VIOLATION
        } else {
            EXIT_OK
        }
    }
}

pub fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut config = ExperimentConfig::parse(&text)?;
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    Ok(config)
}

/// Validate, compute, then write. Nothing is written unless every report
/// rendered successfully.
pub fn run(opts: &RunOptions) -> Result<Outcome, CliError> {
    let config = load_config(&opts.config, opts.seed)?;
    if let Some(expected) = opts.expect {
        if expected != config.experiment {
            return Err(CliError::Config(format!(
                "experiment: config says \"{}\" but the subcommand is \"{expected}\"",
                config.experiment
            )));
        }
    }
    let p = config.validate()?;
    let compute = move || experiments::execute(&config, p);
    let rendered = if opts.threads == 0 {
        compute()?
    } else {
        featmass::with_threads(opts.threads, compute)?
    };
    let files = report::write_all(&opts.out_dir, &rendered.artifacts)?;
    Ok(Outcome {
        files,
        violations: rendered.violations,
        summary: rendered.summary,
    })
}
