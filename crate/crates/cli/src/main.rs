//! `dempc`: command-line driver for data-driven economic MPC. Scenarios are
//! JSON files (see `scenarios/`); datasets and closed-loop logs are CSV.
//!
//! Every verb exits zero exactly when its checks hold: excitation satisfied,
//! solve optimal, all sweep runs optimal with clean audits. Output values use
//! shortest round-trip decimals, so reruns of the same scenario are byte
//! identical.

mod commands;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "dempc", version, about = "Data-driven economic MPC toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the scenario's dataset, audit its excitation, write it as CSV.
    GenData(GenDataArgs),
    /// Audit a recorded dataset for persistency of excitation.
    CheckPe(CheckPeArgs),
    /// Solve one optimization from the scenario's initial window.
    SolveOnce(SolveOnceArgs),
    /// Run the receding-horizon loop over the scenario's sweep points.
    Run(RunArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Where to write the dataset; defaults to `<output_dir>/dataset.csv`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CheckPeArgs {
    /// Dataset CSV to audit.
    #[arg(long)]
    data: PathBuf,
    /// Excitation order to test; defaults to the scenario's requirement.
    #[arg(long)]
    order: Option<usize>,
    /// Scenario supplying the order (horizon + 2 * order_bound + 1).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Relative singular-value cutoff for the rank decision.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct SolveOnceArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Override the terminal-cost weight.
    #[arg(long)]
    beta: Option<f64>,
    /// Override the initial terminal-cost bound.
    #[arg(long, allow_negative_numbers = true)]
    bound: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Override the number of closed-loop steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Override the tail window for average performance.
    #[arg(long)]
    tail: Option<usize>,
    /// Override the scenario's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenData(args) => commands::gen_data(args),
        Command::CheckPe(args) => commands::check_pe(args),
        Command::SolveOnce(args) => commands::solve_once(args),
        Command::Run(args) => commands::run(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
