//! `sht`: simulate, calibrate, test, power and ROC runs for spherical isotropy
//! tests under rotational noise.
//!
//! Exit codes: 0 accept (or success), 10 reject, 64 and above for errors.

mod commands;
mod error;
mod parse;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

pub const EXIT_REJECT: u8 = 10;

#[derive(Parser, Debug)]
#[command(name = "sht", version, about = "Isotropy tests for spherical data under random rotations")]
struct Cli {
    /// Log progress (-v) or debug details (-vv) to stderr.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a simulated noisy dataset as CSV.
    Simulate(commands::SimulateArgs),
    /// Monte-Carlo calibration of the test threshold, written as JSON.
    Calibrate(commands::CalibrateArgs),
    /// Test a dataset for isotropy; exit 0 accepts, 10 rejects.
    Test(commands::TestArgs),
    /// Power table over noise settings and methods, written as CSV.
    Power(commands::PowerArgs),
    /// ROC curves of the configured methods, written as CSV.
    Roc(commands::RocArgs),
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Master seed; every random draw derives from it.
    #[arg(long)]
    pub seed: u64,

    /// Test level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    pub jobs: Option<usize>,

    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn init_pool(jobs: Option<usize>) -> Result<(), CliError> {
    let Some(jobs) = jobs else { return Ok(()) };
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))
}

fn run(cli: Cli) -> Result<commands::Outcome, CliError> {
    let common = match &cli.command {
        Command::Simulate(a) => &a.common,
        Command::Calibrate(a) => &a.common,
        Command::Test(a) => &a.common,
        Command::Power(a) => &a.common,
        Command::Roc(a) => &a.common,
    };
    init_pool(common.jobs)?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Test(a) => commands::test(a),
        Command::Power(a) => commands::power(a),
        Command::Roc(a) => commands::roc(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(error::EX_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(commands::Outcome::Reject) => ExitCode::from(EXIT_REJECT),
        Ok(commands::Outcome::Done) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sht: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
