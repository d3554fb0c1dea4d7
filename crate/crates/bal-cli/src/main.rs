//! `bal`: train-and-acquire experiments from TOML configs.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error.

mod config;
mod report;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bal_core::Result;

#[derive(Parser)]
#[command(name = "bal", version, about = "Bayesian active-learning experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output root; overrides [output].dir and $BAL_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides rng_seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run several acquisition variants on the same data and seed.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated functions from {max_entropy, mean_std, bald, random, none}.
        #[arg(long, value_delimiter = ',', required = true)]
        functions: Vec<String>,
        /// Cells to run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Grid runs along the query-size or direction axis.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated query sizes, e.g. 115,100,90,80,70,60,50.
        #[arg(long, value_delimiter = ',', conflicts_with = "directions")]
        query_sizes: Vec<usize>,
        /// Run most- vs least-uncertain instead of a query-size grid.
        #[arg(long)]
        directions: bool,
        /// Functions to ablate.
        #[arg(long, value_delimiter = ',', default_values_t = [
            "max_entropy".to_string(), "mean_std".to_string(), "bald".to_string(),
        ])]
        functions: Vec<String>,
        /// Cells to run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Export plot-ready CSVs from a run directory.
    Report {
        /// A single run's directory (holding reports.jsonl).
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Print the default configuration as TOML.
    Defaults,
    /// Generate a synthetic dataset to disk as images plus a manifest.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn resolve_common(common: &CommonArgs) -> Result<config::Resolved> {
    let file = config::ConfigFile::load(&common.config)?;
    config::resolve(file, &common.config, common.out.as_deref(), common.seed)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common } => runner::cmd_run(&resolve_common(&common)?),
        Command::Compare {
            common,
            functions,
            jobs,
        } => runner::cmd_compare(&resolve_common(&common)?, &functions, jobs),
        Command::Ablate {
            common,
            query_sizes,
            directions,
            functions,
            jobs,
        } => {
            let axis = if directions {
                runner::AblateAxis::Direction
            } else {
                runner::AblateAxis::QuerySizes(query_sizes)
            };
            runner::cmd_ablate(&resolve_common(&common)?, &axis, &functions, jobs)
        }
        Command::Report { run_dir } => report::cmd_report(&run_dir),
        Command::Defaults => {
            print!("{}", config::ConfigFile::defaults_toml());
            Ok(())
        }
        Command::Synth { common } => runner::cmd_synth(&resolve_common(&common)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
