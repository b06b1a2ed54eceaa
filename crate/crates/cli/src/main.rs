//! `pwamc`: solve the relaxation hierarchy of a piecewise-affine optimal
//! control problem, synthesize a sample-and-hold feedback from a value
//! function, or benchmark the built-in example against its exact solution.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 solver failure,
//! 3 synthesis failure.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Synthesis(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Synthesis(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("i/o error: {e}"))
    }
}

#[derive(Parser, Debug)]
#[command(name = "pwamc", version, about = "Moment relaxations and feedback synthesis for piecewise-affine optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve relaxation orders up to --dmax and write bounds and value functions.
    Solve(SolveArgs),
    /// Run the sample-and-hold policy for a stored value function.
    Synthesize(SynthesizeArgs),
    /// Full pipeline on the built-in example, compared against its exact solution.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Debug, Serialize)]
#[group(required = true, multiple = false)]
pub struct ProblemSource {
    /// Problem file (JSON).
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Use the built-in two-cell example.
    #[arg(long)]
    pub builtin_example: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct RelaxArgs {
    /// Override the mass bound of the problem.
    #[arg(long)]
    pub mass_bound: Option<f64>,
    /// Assemble in the original coordinates instead of the unit box.
    #[arg(long)]
    pub no_scaling: bool,
    /// Interior-point stopping tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Also write each program in SDPA sparse format.
    #[arg(long)]
    pub dump_sdpa: bool,
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct SolveArgs {
    #[command(flatten)]
    pub source: ProblemSource,
    #[arg(long, default_value_t = 6)]
    pub dmax: u32,
    #[command(flatten)]
    pub relax: RelaxArgs,
    /// Solve orders one after another.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long, default_value = "pwamc-out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct SynthesizeArgs {
    #[command(flatten)]
    pub source: ProblemSource,
    /// Value-function file written by `solve`.
    #[arg(long)]
    pub value_function: PathBuf,
    /// Hold budget per step.
    #[arg(long, default_value_t = 0.01)]
    pub diameter: f64,
    /// Stop when within this distance of the target.
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    /// Initial state, comma separated. Defaults to the Dirac point of the problem.
    #[arg(long, value_delimiter = ',')]
    pub x0: Option<Vec<f64>>,
    /// Target state, comma separated. Defaults to the point fixed by the terminal guards.
    #[arg(long, value_delimiter = ',')]
    pub target: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100_000)]
    pub max_steps: usize,
    #[arg(long, default_value = "pwamc-out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct BenchmarkArgs {
    #[arg(long, default_value_t = 6)]
    pub dmax: u32,
    /// Solve only these orders, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub orders: Option<Vec<u32>>,
    #[command(flatten)]
    pub relax: RelaxArgs,
    /// Hold budgets of the policy runs, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.05, 0.025, 0.0125, 0.01])]
    pub diameter: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long, default_value_t = -1.0)]
    pub x0: f64,
    #[arg(long, default_value = "pwamc-out")]
    pub out: PathBuf,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("PWAMC_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("PWAMC_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Solve(a) => commands::solve(a),
        Command::Synthesize(a) => commands::synthesize(a),
        Command::Benchmark(a) => commands::benchmark(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pwamc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
