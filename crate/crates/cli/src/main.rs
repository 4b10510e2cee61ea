//! `pairlab` — configuration-driven experiment runner.
//!
//! Subcommands map onto the library's run commands; every run writes the
//! exact config it used into its output directory, and rerunning from that
//! file reproduces the artifacts bitwise.
//!
//! Exit codes: 0 success, 2 configuration/input error, 3 numeric abort,
//! 4 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pairlab_core::config::{BenchmarkConfig, RunConfig};
use pairlab_core::runner;
use pairlab_core::Error;

#[derive(Parser)]
#[command(name = "pairlab", version, about = "Metadata-driven pair selection workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Dotted-path overrides, e.g. --set engine.learning_rate=0.01
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Replaces the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, Error> {
        RunConfig::load_with_overrides(
            &self.config,
            &self.set,
            self.seed,
            self.out.as_deref(),
        )
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic cohort (CSV + pixel blob).
    Generate(ConfigArgs),
    /// Momentum-contrast pretraining with periodic checkpoints.
    Pretrain(ConfigArgs),
    /// kNN checkpoint selection plus linear-probe / end-to-end evaluation.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory holding the checkpoints (defaults to the config's
        /// output directory).
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Label-conflict statistics of the configured pairing criteria.
    AnalyzePairs(ConfigArgs),
    /// Pretrain + evaluate each arm of a benchmark config over shared seeds.
    Benchmark {
        /// Benchmark config file (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for all arms.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a results CSV as an aligned table.
    Report {
        /// Path to a results/benchmark CSV.
        #[arg(long)]
        csv: PathBuf,
    },
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::NumericAbort { .. } => 3,
        Error::Io { .. } => 4,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Generate(args) => {
            let config = args.load()?;
            let summary = runner::cmd_generate(&config)?;
            println!(
                "generated {} records -> {}",
                summary.n_records,
                summary.csv_path.display()
            );
        }
        Command::Pretrain(args) => {
            let config = args.load()?;
            let summary = runner::cmd_pretrain(&config)?;
            println!(
                "pretrained {} steps, final loss {}",
                summary.steps,
                summary
                    .final_loss
                    .map(|l| l.to_string())
                    .unwrap_or_else(|| "n/a".to_string())
            );
        }
        Command::Evaluate { config, run } => {
            let config = config.load()?;
            let reports = runner::cmd_evaluate(&config, run.as_deref())?;
            for report in reports {
                println!(
                    "{}: mean AUC {:.4} +/- {:.4} over {} splits (checkpoint {})",
                    report.mode.name(),
                    report.mean_auc,
                    report.std_auc,
                    report.per_split_auc.len(),
                    report.checkpoint_id
                );
            }
        }
        Command::AnalyzePairs(args) => {
            let config = args.load()?;
            let stats = runner::cmd_analyze_pairs(&config)?;
            println!(
                "{} queries ({} empty sets), conflict mass at 1.0: {:.4}",
                stats.n_queries, stats.n_empty_sets, stats.mass_at_one
            );
        }
        Command::Benchmark { config, out } => {
            let bench = BenchmarkConfig::load(&config)?;
            let table = runner::cmd_benchmark(&bench, &out)?;
            for arm in &table.arms {
                println!(
                    "{}: linear {} e2e {} [{}]",
                    arm.arm,
                    arm.linear_mean
                        .map(|m| format!("{m:.4}"))
                        .unwrap_or_else(|| "-".to_string()),
                    arm.end_to_end_mean
                        .map(|m| format!("{m:.4}"))
                        .unwrap_or_else(|| "-".to_string()),
                    arm.status
                );
            }
        }
        Command::Report { csv } => {
            print!("{}", runner::cmd_report(&csv)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code_for(&error))
        }
    }
}
