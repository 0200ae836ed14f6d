use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use evosearch_cli::runner::{self, RunOptions};
use evosearch_cli::CliResult;

#[derive(Parser)]
#[command(
    name = "evosearch",
    version,
    about = "Inference-time search on analytic Gaussian mixtures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Only log warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured method and seed at one budget.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run the experiment at several NFE budgets.
    Sweep {
        config: PathBuf,
        /// Ascending, comma-separated budgets; overrides `sweep.budgets`.
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<u64>>,
        #[arg(long)]
        seed_override: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Tabulate the summaries of finished runs.
    Compare {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Also write compare.md and compare.csv here.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Run {
            config,
            seed_override,
            output_dir,
        } => {
            let rows = runner::run(
                &config,
                &RunOptions {
                    seed_override,
                    output_dir,
                },
            )?;
            log::info!("{} runs finished", rows.len());
        }
        Command::Sweep {
            config,
            budgets,
            seed_override,
            output_dir,
        } => {
            let rows = runner::sweep(
                &config,
                budgets,
                &RunOptions {
                    seed_override,
                    output_dir,
                },
            )?;
            log::info!("{} runs finished", rows.len());
        }
        Command::Compare { runs, output_dir } => {
            let (_, md, csv) = runner::compare(&runs)?;
            print!("{md}");
            if let Some(dir) = output_dir {
                runner::write_comparison(&dir, &md, &csv)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
