use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use gama::generalized::{solve_box as run_box, solve_linear_penalty, BoundSpec, LinearMapPair};
use gama::io::{format_value, read_dense, read_matrix, read_table, write_dense, write_matrix};
use gama::matrix::{frob_norm, SymMatrix};
use gama::oracle::{oracle_solve, MAX_DIM};
use gama::portfolio::{self, BacktestReport, GamaEstimator, LambdaRule, RebalancePlan};
use gama::problem::{generate_synthetic, sample_covariance, sample_gaussian, Divisor};
use gama::{Diagnostics, InitStrategy, SolverConfig, SolverReport, StopReason, TraceRecord};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::json::{self, SCHEMA_VERSION};
use crate::{
    BacktestArgs, BenchArgs, DivisorArg, GenArgs, InitArg, SolveArgs, SolveBoxArgs, SolveLinearArgs, SolverOpts,
};

/// Largest oracle disagreement accepted by `--verify`.
const VERIFY_TOL: f64 = 1e-5;

impl From<DivisorArg> for Divisor {
    fn from(d: DivisorArg) -> Self {
        match d {
            DivisorArg::N => Divisor::N,
            DivisorArg::NMinus1 => Divisor::NMinus1,
        }
    }
}

impl InitArg {
    fn strategy(self) -> InitStrategy {
        match self {
            InitArg::Splus => InitStrategy::SPlusLambdaI,
            InitArg::Diag => InitStrategy::DiagSPlusLambdaI,
        }
    }

    fn name(self) -> &'static str {
        match self {
            InitArg::Splus => "splus",
            InitArg::Diag => "diag",
        }
    }
}

impl SolverOpts {
    fn config(&self, lambda: f64) -> SolverConfig {
        SolverConfig::new(lambda).with_eps_opt(self.tol).with_max_iters(self.max_iters)
    }
}

fn load_matrix(path: &Path) -> CliResult<SymMatrix> {
    read_matrix(path).map_err(|e| CliError::at(path, e))
}

fn save_matrix(path: &Option<impl AsRef<Path>>, m: &SymMatrix) -> CliResult<()> {
    if let Some(p) = path {
        write_matrix(p, m).map_err(|e| CliError::at(p.as_ref(), e))?;
    }
    Ok(())
}

fn save_report(path: &Option<impl AsRef<Path>>, value: &impl Serialize) -> CliResult<()> {
    if let Some(p) = path {
        json::write(p.as_ref(), value).map_err(|e| CliError::Io(format!("{}: {e}", p.as_ref().display())))?;
    }
    Ok(())
}

fn write_trace(path: &Path, trace: &[TraceRecord]) -> CliResult<()> {
    let mut out = String::from("iter,gap,tau,frob_change,neg_logdet,backtracks,safe_step\n");
    for r in trace {
        let gap = r.gap.map(format_value).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.iter,
            gap,
            format_value(r.tau),
            format_value(r.frob_change),
            format_value(r.neg_logdet),
            r.backtracks,
            r.safe_step
        );
    }
    fs::write(path, out).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn require_converged(converged: bool, stop: StopReason, iters: usize, gap: Option<f64>) -> CliResult<()> {
    if converged {
        Ok(())
    } else {
        Err(CliError::Solver(format!(
            "not converged after {iters} iterations ({stop:?}), gap {}",
            gap.map_or("undefined".to_string(), |g| format!("{g:e}"))
        )))
    }
}

pub fn gen(a: &GenArgs) -> CliResult<()> {
    let prob = generate_synthetic(a.p, a.sparsity, a.seed)?;
    let data = sample_gaussian(&prob, a.n, a.seed)?;
    let s = sample_covariance(&data, a.divisor.into())?;
    save_matrix(&a.out_prec, &prob.omega)?;
    save_matrix(&a.out_cov, &s)?;
    if let Some(p) = &a.out_data {
        write_dense(p, &data).map_err(|e| CliError::at(p, e))?;
    }
    log::info!(
        "p = {}, off-diagonal nonzero fraction {:.4}",
        a.p,
        prob.offdiag_nonzero_fraction()
    );
    Ok(())
}

#[derive(Serialize)]
struct Verify {
    oracle_frob_diff: f64,
    tolerance: f64,
    passed: bool,
}

#[derive(Serialize)]
struct SolveJson<'a> {
    schema: u32,
    command: &'static str,
    p: usize,
    lambda: f64,
    tol: f64,
    max_iters: usize,
    init: &'static str,
    converged: bool,
    stop_reason: StopReason,
    iters: usize,
    backtracks_total: usize,
    gap: Option<f64>,
    nnz_pct: f64,
    diagnostics: &'a Diagnostics,
    verify: Option<Verify>,
}

pub fn solve(a: &SolveArgs) -> CliResult<()> {
    let s = load_matrix(&a.cov)?;
    let cfg = a.solver.config(a.lambda).with_init(a.init.strategy());
    let r = gama::solve(&s, &cfg)?;

    let verify = if a.verify {
        if s.dim() > MAX_DIM {
            log::warn!("--verify skipped: p = {} exceeds {MAX_DIM}", s.dim());
            None
        } else {
            let x = oracle_solve(&s, a.lambda, 1e-12)?;
            let d = frob_norm(&x.sub(&r.z_star));
            Some(Verify { oracle_frob_diff: d, tolerance: VERIFY_TOL, passed: d <= VERIFY_TOL })
        }
    } else {
        None
    };

    save_matrix(&a.out, &r.z_star)?;
    save_matrix(&a.out_cov, &r.y_star)?;
    if let Some(p) = &a.trace {
        write_trace(p, &r.trace)?;
    }
    let report = SolveJson {
        schema: SCHEMA_VERSION,
        command: "solve",
        p: s.dim(),
        lambda: a.lambda,
        tol: a.solver.tol,
        max_iters: a.solver.max_iters,
        init: a.init.name(),
        converged: r.converged,
        stop_reason: r.stop_reason,
        iters: r.iters,
        backtracks_total: r.backtracks_total,
        gap: r.gap,
        nnz_pct: r.nnz_pct,
        diagnostics: &r.diagnostics,
        verify,
    };
    save_report(&a.report, &report)?;

    require_converged(r.converged, r.stop_reason, r.iters, r.gap)?;
    if let Some(v) = &report.verify {
        if !v.passed {
            return Err(CliError::Solver(format!(
                "oracle disagreement {:e} exceeds {VERIFY_TOL:e}",
                v.oracle_frob_diff
            )));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct BoxJson<'a> {
    schema: u32,
    command: &'static str,
    p: usize,
    tol: f64,
    max_iters: usize,
    converged: bool,
    infeasible_suspected: bool,
    stop_reason: StopReason,
    iters: usize,
    backtracks_total: usize,
    gap: Option<f64>,
    nnz_pct: f64,
    diagnostics: &'a Diagnostics,
}

pub fn solve_box(a: &SolveBoxArgs) -> CliResult<()> {
    let lower = load_matrix(&a.lower)?;
    let upper = load_matrix(&a.upper)?;
    if lower.dim() != upper.dim() {
        return Err(CliError::Io(format!("bounds are {} x {0} and {} x {1}", lower.dim(), upper.dim())));
    }
    let bounds = BoundSpec::new(lower, upper)?;
    let r: SolverReport = run_box(&bounds, &a.solver.config(0.0))?;
    save_matrix(&a.out, &r.z_star)?;
    save_matrix(&a.out_cov, &r.y_star)?;
    if let Some(p) = &a.trace {
        write_trace(p, &r.trace)?;
    }
    save_report(
        &a.report,
        &BoxJson {
            schema: SCHEMA_VERSION,
            command: "solve-box",
            p: bounds.dim(),
            tol: a.solver.tol,
            max_iters: a.solver.max_iters,
            converged: r.converged,
            infeasible_suspected: r.infeasible_suspected,
            stop_reason: r.stop_reason,
            iters: r.iters,
            backtracks_total: r.backtracks_total,
            gap: r.gap,
            nnz_pct: r.nnz_pct,
            diagnostics: &r.diagnostics,
        },
    )?;
    if r.infeasible_suspected {
        log::warn!("no certified solution; the bounds may admit no positive definite matrix");
    }
    require_converged(r.converged, r.stop_reason, r.iters, r.gap)
}

#[derive(Serialize)]
struct LinearJson {
    schema: u32,
    command: &'static str,
    p: usize,
    q: usize,
    r: usize,
    lambda: f64,
    tol: f64,
    max_iters: usize,
    converged: bool,
    stop_reason: StopReason,
    iters: usize,
    backtracks_total: usize,
    gap: f64,
    /// Share of nonzero entries in the sparse estimate of Aᵀ X B, in percent.
    transform_nnz_pct: f64,
}

pub fn solve_linear(a: &SolveLinearArgs) -> CliResult<()> {
    let s = load_matrix(&a.cov)?;
    let am = read_dense(&a.a).map_err(|e| CliError::at(&a.a, e))?;
    let bm = read_dense(&a.b).map_err(|e| CliError::at(&a.b, e))?;
    if am.nrows() != s.dim() || bm.nrows() != s.dim() {
        return Err(CliError::Io(format!(
            "A and B need {} rows, found {} and {}",
            s.dim(),
            am.nrows(),
            bm.nrows()
        )));
    }
    let maps = LinearMapPair::new(am, bm)?;
    let r = solve_linear_penalty(&s, &maps, a.lambda, &a.solver.config(a.lambda))?;
    save_matrix(&a.out, &r.x_star)?;
    if let Some(p) = &a.out_transform {
        write_dense(p, &r.z_star).map_err(|e| CliError::at(p, e))?;
    }
    let (q, rr) = maps.dual_shape();
    let nnz = r.z_star.iter().filter(|v| v.abs() > gama::solver::ZERO_TOL).count();
    save_report(
        &a.report,
        &LinearJson {
            schema: SCHEMA_VERSION,
            command: "solve-linear",
            p: s.dim(),
            q,
            r: rr,
            lambda: a.lambda,
            tol: a.solver.tol,
            max_iters: a.solver.max_iters,
            converged: r.converged,
            stop_reason: r.stop_reason,
            iters: r.iters,
            backtracks_total: r.backtracks_total,
            gap: r.gap,
            transform_nnz_pct: 100.0 * nnz as f64 / (q * rr) as f64,
        },
    )?;
    require_converged(r.converged, r.stop_reason, r.iters, Some(r.gap))
}

#[derive(Serialize)]
struct BenchRow {
    lambda: f64,
    converged: bool,
    iters: usize,
    gap: Option<f64>,
    nnz_pct: f64,
    condition_number: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    time_per_iter_s: Option<f64>,
}

#[derive(Serialize)]
struct BenchJson {
    schema: u32,
    command: &'static str,
    p: usize,
    tol: f64,
    max_iters: usize,
    init: &'static str,
    rows: Vec<BenchRow>,
}

pub fn bench(a: &BenchArgs) -> CliResult<()> {
    let s = load_matrix(&a.cov)?;
    let rows = a
        .lambdas
        .par_iter()
        .map(|&lambda| -> CliResult<BenchRow> {
            let start = Instant::now();
            let r = gama::solve(&s, &a.solver.config(lambda).with_init(a.init.strategy()))?;
            let secs = start.elapsed().as_secs_f64();
            Ok(BenchRow {
                lambda,
                converged: r.converged,
                iters: r.iters,
                gap: r.gap,
                nnz_pct: r.nnz_pct,
                condition_number: r.diagnostics.condition_number,
                time_s: a.timing.then_some(secs),
                time_per_iter_s: a.timing.then(|| secs / r.iters.max(1) as f64),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let failed: Vec<f64> = rows.iter().filter(|r| !r.converged).map(|r| r.lambda).collect();
    let out = BenchJson {
        schema: SCHEMA_VERSION,
        command: "bench",
        p: s.dim(),
        tol: a.solver.tol,
        max_iters: a.solver.max_iters,
        init: a.init.name(),
        rows,
    };
    json::write(&a.out, &out).map_err(|e| CliError::Io(format!("{}: {e}", a.out.display())))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Solver(format!("no convergence for lambda in {failed:?}")))
    }
}

#[derive(Serialize)]
struct BacktestJson<'a> {
    schema: u32,
    command: &'static str,
    n_assets: usize,
    n_estim: usize,
    hold_len: usize,
    n_blocks: usize,
    rows_dropped: usize,
    lambda_rule: LambdaRule,
    risk_free: f64,
    #[serde(flatten)]
    report: &'a BacktestReport,
}

pub fn backtest(a: &BacktestArgs) -> CliResult<()> {
    let returns = if let Some(path) = &a.prices {
        let mut prices = read_table(path).map_err(|e| CliError::at(path, e))?.data;
        if let Some(k) = a.resample_every {
            prices = portfolio::resample_every(&prices, k)?;
        }
        portfolio::simple_returns(&prices)?
    } else {
        let path = a.returns.as_ref().expect("clap enforces one input");
        read_table(path).map_err(|e| CliError::at(path, e))?.data
    };
    let (t, p) = returns.shape();
    if a.n_estim == 0 || a.hold_len == 0 {
        return Err(CliError::Usage("--n-estim and --hold-len must be positive".into()));
    }
    if t < a.n_estim + a.hold_len {
        return Err(CliError::Usage(format!(
            "{t} return rows cannot hold an estimation window of {} and one block of {}",
            a.n_estim, a.hold_len
        )));
    }
    let n_blocks = (t - a.n_estim) / a.hold_len;
    let used = a.n_estim + n_blocks * a.hold_len;
    if used < t {
        log::warn!("dropping the last {} return rows that do not fill a block", t - used);
    }
    let costs = match a.costs.len() {
        0 => Vec::new(),
        1 => vec![a.costs[0]; p],
        n if n == p => a.costs.clone(),
        n => return Err(CliError::Usage(format!("{n} costs given for {p} assets"))),
    };
    let lambda_rule = match a.lambda {
        Some(l) => LambdaRule::Fixed(l),
        None => LambdaRule::SpectralFraction(a.lambda_frac),
    };
    let plan = RebalancePlan {
        divisor: a.divisor.into(),
        risk_free: a.rf,
        costs,
        ..RebalancePlan::new(a.n_estim, a.hold_len, n_blocks, p, lambda_rule)
    };
    let estimator = GamaEstimator { config: a.solver.config(0.0) };
    let report = portfolio::backtest(&returns.rows(0, used).into_owned(), &plan, &estimator)?;

    if let Some(path) = &a.wealth {
        let mut out = String::from("t,wealth\n");
        for (k, w) in report.wealth_curve.iter().enumerate() {
            let _ = writeln!(out, "{},{}", a.n_estim + k, format_value(*w));
        }
        fs::write(path, out).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    json::write(
        &a.report,
        &BacktestJson {
            schema: SCHEMA_VERSION,
            command: "backtest",
            n_assets: p,
            n_estim: a.n_estim,
            hold_len: a.hold_len,
            n_blocks,
            rows_dropped: t - used,
            lambda_rule,
            risk_free: a.rf,
            report: &report,
        },
    )
    .map_err(|e| CliError::Io(format!("{}: {e}", a.report.display())))?;
    Ok(())
}
