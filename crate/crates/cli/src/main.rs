use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use featmass_cli::{run, Experiment, RunOptions, OUT_DIR_ENV};

#[derive(Parser)]
#[command(
    name = "featmass",
    version,
    about = "Missing-mass simulation and verification experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run whichever experiment the config names
    Run(RunArgs),
    /// Exact moments and variance factors along n_grid
    Moments(RunArgs),
    /// Monte Carlo replicates: K_n, K_{n,r}, M_n, K_{n,1}/n
    Simulate(RunArgs),
    /// Concentration bounds against empirical tail frequencies
    Bounds(RunArgs),
    /// Exact E[K_{n,r}] against its regular-variation asymptote
    Karlin(RunArgs),
    /// Distribution of K_{n,1}/(n M_n) along n_grid
    Consistency(RunArgs),
    /// Gamma-process prior counterexample
    Inconsistency(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    out: PathBuf,
    /// Override master_seed from the config
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, expect) = match cli.command {
        Command::Run(a) => (a, None),
        Command::Moments(a) => (a, Some(Experiment::Moments)),
        Command::Simulate(a) => (a, Some(Experiment::Simulate)),
        Command::Bounds(a) => (a, Some(Experiment::Bounds)),
        Command::Karlin(a) => (a, Some(Experiment::Karlin)),
        Command::Consistency(a) => (a, Some(Experiment::Consistency)),
        Command::Inconsistency(a) => (a, Some(Experiment::Inconsistency)),
    };
    let opts = RunOptions {
        config: args.config,
        out_dir: args.out,
        seed: args.seed,
        threads: args.threads,
        expect,
    };
    match run(&opts) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.violations > 0 {
                eprintln!("{} check(s) violated", outcome.violations);
            }
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("featmass: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
