use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use aero2_ftc::cli::{self, RunFlags};

#[derive(Parser)]
#[command(name = "aero2-ftc", about = "2DOF helicopter fault-tolerant control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario (or a manifest of scenarios) and write trace +
    /// metrics CSVs
    Run {
        /// Scenario or manifest JSON file
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Built-in scenario: `healthy` or `fig7`
        #[arg(long)]
        preset: Option<String>,
        /// Output directory (falls back to $AERO_FTC_OUT, then `.`)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario RNG seed
        #[arg(long)]
        seed: Option<u64>,
        /// Disable the fault estimator
        #[arg(long)]
        no_estimator: bool,
        /// Disable fault accommodation
        #[arg(long)]
        no_accommodation: bool,
    },
    /// Compare two trace CSVs and print per-segment metric deltas
    Compare {
        baseline: PathBuf,
        candidate: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            preset,
            out,
            seed,
            no_estimator,
            no_accommodation,
        } => cli::cmd_run(
            config.as_deref(),
            preset.as_deref(),
            &RunFlags {
                out_dir: out,
                seed,
                no_estimator,
                no_accommodation,
            },
        ),
        Command::Compare {
            baseline,
            candidate,
        } => cli::cmd_compare(&baseline, &candidate),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(cli::exit_code(&err) as u8)
        }
    }
}
