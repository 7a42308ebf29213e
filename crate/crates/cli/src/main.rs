//! `ggflow`: config-driven experiments with the generalized gradient flow.

mod config;
mod lemmas;
mod run;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::config::ExperimentConfig;
use crate::run::Subcommand;

#[derive(Debug, Parser)]
#[command(name = "ggflow", version, about)]
struct Cli {
    #[arg(value_enum)]
    command: Subcommand,
    /// Experiment file of `key = value` lines.
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for random initial points and lemma cases; overrides `sweep.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match ExperimentConfig::from_file(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    match run::execute(&cfg, cli.command, &cfg.output_dir, cfg.seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(run::exit_code(&e))
        }
    }
}
