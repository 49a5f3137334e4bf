//! Thin command-line front end over [`isdarts::cli`]. All real work lives
//! in the library; this binary only parses flags, dispatches, and maps
//! errors onto the documented exit codes (0 ok, 2 config/input, 3
//! non-finite loss, 4 fingerprint mismatch, 5 missing oracle entry).
//! Log verbosity is controlled by `RUST_LOG` (e.g. `RUST_LOG=debug`).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use isdarts::cli;

#[derive(Parser)]
#[command(
    name = "isdarts",
    version,
    about = "Desk-scale architecture-search laboratory: information-based \
             supernet shrinking, a first-order DARTS baseline, and a \
             brute-force subnet oracle"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured search method and write a run directory.
    Search {
        /// JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every subnet of the configured space into an oracle table.
    Oracle {
        /// JSON run configuration (space, dataset, optimizer, budget).
        #[arg(long)]
        config: PathBuf,
        /// Destination oracle table (JSON lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// Look a mask up in an oracle table and print its regret.
    Eval {
        /// Mask JSON file (e.g. a run's final_mask.json).
        #[arg(long)]
        mask: PathBuf,
        /// Oracle table produced by `oracle`.
        #[arg(long)]
        oracle: PathBuf,
    },
    /// Score run directories against an oracle table (regret, rank
    /// correlation, swap defects) and print a JSON report.
    Compare {
        /// A run directory, or a directory whose children are runs.
        #[arg(long)]
        run: PathBuf,
        /// Oracle table produced by `oracle`.
        #[arg(long)]
        oracle: PathBuf,
    },
    /// Pivot a run's per-step importance files into one matrix CSV.
    ExportHeatmap {
        /// A shrink-method run directory.
        #[arg(long)]
        run: PathBuf,
        /// Destination CSV (one row per step, one column per candidate).
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let args = Cli::parse();
    let result = match args.command {
        Command::Search { config, seed, out } => {
            cli::cmd_search(&config, seed, out.as_deref()).map(|_| ())
        }
        Command::Oracle { config, out } => cli::cmd_oracle(&config, &out).map(|_| ()),
        Command::Eval { mask, oracle } => cli::cmd_eval(&mask, &oracle).map(|_| ()),
        Command::Compare { run, oracle } => cli::cmd_compare(&run, &oracle).map(|_| ()),
        Command::ExportHeatmap { run, out } => cli::cmd_export_heatmap(&run, &out).map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(cli::exit_code(&err) as u8)
        }
    }
}
