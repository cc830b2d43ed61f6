mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cqed_cluster::dynamics::ModelTier;

use config::{Overrides, RunConfig};
use error::CliError;

/// Cluster-state generation and fusion in cascaded cavities.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Monte Carlo trials for `fuse`.
    #[arg(long, global = true)]
    trials: Option<usize>,

    /// Condition `fuse` on an outcome path such as `+,-`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    postselect: Option<String>,

    /// analytic, spin or full.
    #[arg(long, global = true)]
    tier: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Grow a linear cluster state with one control atom.
    Chain,
    /// Fuse two chains with two further control atoms.
    Fuse,
    /// Compare the full dispersive model with the exchange model.
    Validate,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let tier = cli.tier.as_deref().map(str::parse::<ModelTier>).transpose()?;
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
        trials: cli.trials,
        postselect: cli.postselect,
        tier,
    };
    let config = RunConfig::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Chain => commands::cmd_chain(&config),
        Command::Fuse => commands::cmd_fuse(&config),
        Command::Validate => commands::cmd_validate(&config),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    // A panic means a broken internal invariant; keep to the three exit codes.
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(_) => ExitCode::from(2),
    }
}
