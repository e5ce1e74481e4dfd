//! `benchtrack`: validate parameters, build dual fields, evaluate policies, simulate and verify.

mod commands;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use benchtrack_core::mc::DEFAULT_SEED;
use benchtrack_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "benchtrack", version, about = "Relaxed benchmark tracking with capital injection")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Model parameter file (JSON); the built-in reference set when omitted.
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,
    /// Directory for JSON/CSV artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Monte Carlo paths.
    #[arg(long, global = true, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, global = true, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, global = true, default_value_t = 10.0)]
    pub horizon: f64,
    /// Dual-field grid as `rmax,hmax,nr,nh`; sized from the model when omitted.
    #[arg(long, global = true)]
    pub grid: Option<String>,
    /// Previously solved dual field to reuse instead of building one.
    #[arg(long, global = true)]
    pub field: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the standing assumptions.
    Validate {
        #[arg(long, value_enum, default_value_t = Mode::Controlled)]
        mode: Mode,
    },
    /// Build the dual field and write `field.json`.
    Solve,
    /// Optimal controls and value at one auxiliary state.
    Policy {
        #[arg(long)]
        x: f64,
        #[arg(long, default_value_t = 0.0)]
        h: f64,
        /// Defaults to `z0` from the parameters.
        #[arg(long)]
        z: Option<f64>,
    },
    /// Simulate benchmark paths or the controlled system.
    Simulate {
        #[arg(long, value_enum, default_value_t = Mode::Benchmark)]
        mode: Mode,
        /// Initial wealth for the controlled run.
        #[arg(long, default_value_t = 2.0)]
        wealth: f64,
        /// Paths written to CSV.
        #[arg(long, default_value_t = 8)]
        keep: usize,
    },
    /// Run the verification suite.
    Verify {
        #[arg(long, value_enum, default_value_t = Level::Quick)]
        level: Level,
    },
    /// Time the main operations.
    Bench,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Benchmark,
    Controlled,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

/// Process outcome besides the JSON already printed.
pub enum Outcome {
    Ok,
    /// Validation or verification failed.
    Failed,
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::AssumptionViolated(_) | Error::DegenerateEll(_) => 2,
        Error::Numerical(_) | Error::Bracket { .. } | Error::Convexity { .. } | Error::FieldCoverage(_) => 3,
        _ => 1,
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("BENCHTRACK_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("BENCHTRACK_THREADS must be a positive integer, got {v:?}"))?;
    if n == 0 {
        return Err("BENCHTRACK_THREADS must be positive".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let c = &cli.common;
    let result = match cli.command {
        Command::Validate { mode } => commands::validate(c, mode),
        Command::Solve => commands::solve(c),
        Command::Policy { x, h, z } => commands::policy(c, x, h, z),
        Command::Simulate { mode, wealth, keep } => commands::simulate(c, mode, wealth, keep),
        Command::Verify { level } => verify::run(c, level),
        Command::Bench => commands::bench(c),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
