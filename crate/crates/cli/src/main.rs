//! `gama`: generate problems, solve them, check answers, benchmark and backtest.

mod commands;
mod error;
mod json;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "gama", version, about = "Sparse inverse covariance estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a random sparse precision matrix and a sample covariance from it.
    Gen(GenArgs),
    /// Estimate a sparse precision matrix from a covariance CSV.
    Solve(SolveArgs),
    /// Maximize log det of a covariance constrained to entrywise bounds.
    SolveBox(SolveBoxArgs),
    /// Penalize a linear transform Aᵀ X B of the precision matrix.
    SolveLinear(SolveLinearArgs),
    /// Solve over a grid of penalties and print a summary table as JSON.
    Bench(BenchArgs),
    /// Minimum-variance rebalancing backtest on price or return data.
    Backtest(BacktestArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Default)]
pub enum InitArg {
    /// S + λI
    #[default]
    Splus,
    /// diag(S) + λI
    Diag,
}

#[derive(ValueEnum, Clone, Copy, Debug, Default)]
pub enum DivisorArg {
    #[default]
    N,
    NMinus1,
}

/// Stopping controls shared by the solving commands.
#[derive(Args, Debug, Clone)]
pub struct SolverOpts {
    /// Duality-gap tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Iteration cap; an uncertified run exits with code 2.
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Dimension.
    #[arg(long)]
    p: usize,
    /// Target percentage of nonzero off-diagonal entries.
    #[arg(long, default_value_t = 15.0)]
    sparsity: f64,
    /// Number of Gaussian samples for the sample covariance.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t)]
    divisor: DivisorArg,
    /// Output CSV for the true precision matrix.
    #[arg(long)]
    out_prec: Option<PathBuf>,
    /// Output CSV for the sample covariance.
    #[arg(long)]
    out_cov: Option<PathBuf>,
    /// Output CSV for the n x p samples.
    #[arg(long)]
    out_data: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Sample covariance CSV.
    #[arg(long)]
    cov: PathBuf,
    #[arg(long)]
    lambda: f64,
    #[command(flatten)]
    solver: SolverOpts,
    #[arg(long, value_enum, default_value_t)]
    init: InitArg,
    /// Compare with the reference solver (p ≤ 10); disagreement above 1e-5 exits with 2.
    #[arg(long)]
    verify: bool,
    /// Output CSV for the sparse precision estimate.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output CSV for the covariance estimate.
    #[arg(long)]
    out_cov: Option<PathBuf>,
    /// JSON report (`-` for stdout).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-iteration CSV trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SolveBoxArgs {
    /// Lower-bound CSV.
    #[arg(long)]
    lower: PathBuf,
    /// Upper-bound CSV.
    #[arg(long)]
    upper: PathBuf,
    #[command(flatten)]
    solver: SolverOpts,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    out_cov: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SolveLinearArgs {
    #[arg(long)]
    cov: PathBuf,
    /// p x q CSV.
    #[arg(long)]
    a: PathBuf,
    /// p x r CSV.
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    lambda: f64,
    #[command(flatten)]
    solver: SolverOpts,
    /// Output CSV for the precision estimate.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output CSV for the sparse estimate of Aᵀ X B.
    #[arg(long)]
    out_transform: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    cov: PathBuf,
    /// Comma-separated penalties.
    #[arg(long, value_delimiter = ',', required = true)]
    lambdas: Vec<f64>,
    #[command(flatten)]
    solver: SolverOpts,
    #[arg(long, value_enum, default_value_t)]
    init: InitArg,
    /// Include wall-clock columns (makes the output run-dependent).
    #[arg(long)]
    timing: bool,
    /// Output JSON (`-` for stdout).
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["prices", "returns"]))]
pub struct BacktestArgs {
    /// Price CSV (optional header line); converted to simple returns.
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Return CSV (optional header line).
    #[arg(long)]
    returns: Option<PathBuf>,
    /// Keep every k-th price row before computing returns.
    #[arg(long, requires = "prices")]
    resample_every: Option<usize>,
    /// Rows in each rolling estimation window.
    #[arg(long)]
    n_estim: usize,
    /// Periods each portfolio is held before rebalancing.
    #[arg(long)]
    hold_len: usize,
    /// λ = f · ‖S‖₂ per block.
    #[arg(long, default_value_t = 0.1, conflicts_with = "lambda")]
    lambda_frac: f64,
    /// Fixed λ for every block.
    #[arg(long)]
    lambda: Option<f64>,
    /// Risk-free return per period.
    #[arg(long, default_value_t = 0.0)]
    rf: f64,
    /// Transaction cost per asset: one value for all, or one per asset.
    #[arg(long, value_delimiter = ',')]
    costs: Vec<f64>,
    /// Sample covariance divisor.
    #[arg(long, value_enum, default_value_t)]
    divisor: DivisorArg,
    #[command(flatten)]
    solver: SolverOpts,
    /// JSON report (`-` for stdout).
    #[arg(long, default_value = "-")]
    report: PathBuf,
    /// Wealth curve CSV with columns `t,wealth`.
    #[arg(long)]
    wealth: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Solve(a) => commands::solve(&a),
        Command::SolveBox(a) => commands::solve_box(&a),
        Command::SolveLinear(a) => commands::solve_linear(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Backtest(a) => commands::backtest(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gama: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
