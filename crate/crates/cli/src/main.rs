//! Command-line front end for the stability simulator.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stabsim::ControllerKind;

#[derive(Debug, Parser)]
#[command(name = "stabsim", version, about = "Stability-aware self-adaptation of a simulated cloud node")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the experiment subcommands. Flags override the config file.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON experiment configuration; every field is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (or file, for synth-trace and inspect-qtable).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = parse_controller)]
    pub controller: Option<ControllerKind>,
    #[arg(long)]
    pub service_type: Option<u8>,
    /// Number of time instances to simulate.
    #[arg(long)]
    pub instances: Option<usize>,
}

fn parse_controller(s: &str) -> Result<ControllerKind, String> {
    s.parse().map_err(|_| {
        let names: Vec<_> = ControllerKind::ALL.iter().map(|k| k.as_str()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one controller over the workload and write CSV artifacts.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run several controllers on the same trace and tabulate their totals.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated controllers; defaults to all four.
        #[arg(long, value_delimiter = ',', value_parser = parse_controller)]
        controllers: Vec<ControllerKind>,
    },
    /// Write the configured workload trace as `instance,requests` CSV.
    SynthTrace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        base: Option<u32>,
        #[arg(long)]
        peak: Option<u32>,
    },
    /// Solve a game listing, or the datacenter game of a configuration.
    SolveGame(commands::SolveGameArgs),
    /// Dump a Q-table as CSV, read from a file or learned by a time-aware run.
    InspectQtable {
        #[command(flatten)]
        common: Common,
        /// Existing Q-table CSV to normalise instead of running.
        #[arg(long)]
        qtable: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { common } => commands::run(&common),
        Command::Compare { common, controllers } => commands::compare(&common, &controllers),
        Command::SynthTrace { common, base, peak } => commands::synth_trace(&common, base, peak),
        Command::SolveGame(args) => commands::solve_game(&args),
        Command::InspectQtable { common, qtable } => commands::inspect_qtable(&common, qtable.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
