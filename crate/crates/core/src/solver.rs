//! Dual proximal-gradient (alternating minimization) solver for
//!
//! ```text
//! minimize  -log det X + <S, X> + λ ‖X‖₁   over X ≻ 0
//! ```
//!
//! The iteration runs on the dual variable `Y` (the covariance estimate),
//! which stays inside the box `‖Y - S‖_∞ ≤ λ` after the first update:
//!
//! ```text
//! X_{k+1} = Y_k⁻¹
//! Z_{k+1} = soft(X_{k+1} + (Y_k - S)/τ_k, λ/τ_k)
//! Y_{k+1} = clip(Y_k - S + τ_k X_{k+1}, λ) + S      (= Y_k + τ_k (X_{k+1} - Z_{k+1}))
//! ```
//!
//! Step sizes start from a Barzilai-Borwein proposal and are backtracked until
//! `Y_{k+1}` is positive definite and satisfies a quadratic sufficient-descent
//! test on `-log det Y`. Termination uses the duality gap between the sparse
//! primal iterate `Z` and the dual iterate `Y`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{
    cholesky, dense_inner, extreme_eigenvalues, frob_distance, frob_norm, CholeskyFactor,
    SymMatrix,
};
use crate::prox::{clip_scalar, soft_scalar};

/// Entries with magnitude at or below this count as zero (sparsity pattern, KKT branches).
pub const ZERO_TOL: f64 = 1e-12;

/// Absolute slack allowed in the sufficient-descent inequality.
pub const DESCENT_SLACK: f64 = 1e-12;

/// Extra halvings attempted after the safe step before the search gives up.
pub(crate) const SAFE_STEP_RETRIES: usize = 60;

/// Starting point for the dual iterate.
#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    /// `S + λI`; feasible and positive definite whenever `S ⪰ 0` and `λ > 0`.
    SPlusLambdaI,
    /// `diag(S) + λI`; tends to be faster for large `λ`.
    DiagSPlusLambdaI,
    Custom(SymMatrix),
}

/// How `τ_k` is chosen at each iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum StepRule {
    /// Barzilai-Borwein proposal followed by backtracking, with a safe-step fallback.
    Adaptive,
    /// Constant step, no line search. A non positive definite update stalls the run.
    Fixed(f64),
    /// Replays a recorded step sequence; the run stops when it is exhausted.
    Schedule(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Penalty `λ`.
    pub lambda: f64,
    /// Duality-gap tolerance.
    pub eps_opt: f64,
    /// Relative primal-progress tolerance `‖Y_{k+1}-Y_k‖_F/‖Y_k‖_F`; 0 disables it.
    pub eps_prim: f64,
    /// Backtracking factor `c ∈ (0, 1)`.
    pub backtrack_c: f64,
    /// First step proposal `τ_{0,0}`.
    pub tau_init: f64,
    pub max_iters: usize,
    pub max_backtracks: usize,
    pub init_strategy: InitStrategy,
    pub step_rule: StepRule,
}

impl SolverConfig {
    pub fn new(lambda: f64) -> Self {
        SolverConfig {
            lambda,
            eps_opt: 1e-8,
            eps_prim: 0.0,
            backtrack_c: 0.5,
            tau_init: 1.0,
            max_iters: 5000,
            max_backtracks: 20,
            init_strategy: InitStrategy::SPlusLambdaI,
            step_rule: StepRule::Adaptive,
        }
    }

    pub fn with_eps_opt(mut self, eps_opt: f64) -> Self {
        self.eps_opt = eps_opt;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_init(mut self, init: InitStrategy) -> Self {
        self.init_strategy = init;
        self
    }

    pub fn with_step_rule(mut self, rule: StepRule) -> Self {
        self.step_rule = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if !(self.eps_opt > 0.0) {
            return bad(format!("eps_opt must be > 0, got {}", self.eps_opt));
        }
        if !(self.eps_prim >= 0.0) {
            return bad(format!("eps_prim must be >= 0, got {}", self.eps_prim));
        }
        if !(self.backtrack_c > 0.0 && self.backtrack_c < 1.0) {
            return bad(format!("backtrack_c must lie in (0, 1), got {}", self.backtrack_c));
        }
        if !(self.tau_init > 0.0 && self.tau_init.is_finite()) {
            return bad(format!("tau_init must be > 0, got {}", self.tau_init));
        }
        if self.max_iters == 0 || self.max_backtracks == 0 {
            return bad("max_iters and max_backtracks must be positive".into());
        }
        match &self.step_rule {
            StepRule::Adaptive => {}
            StepRule::Fixed(t) if *t > 0.0 && t.is_finite() => {}
            StepRule::Schedule(ts) if ts.iter().all(|t| *t > 0.0 && t.is_finite()) => {}
            other => return bad(format!("invalid step rule {other:?}")),
        }
        Ok(())
    }
}

/// One accepted iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    /// 1-based index of the accepted iterate `Y_k`.
    pub iter: usize,
    /// Duality gap after the update; `None` while `Z` is not positive definite.
    pub gap: Option<f64>,
    /// Accepted step `τ`.
    pub tau: f64,
    /// `‖Y_k - Y_{k-1}‖_F`.
    pub frob_change: f64,
    /// `-log det Y_k`.
    pub neg_logdet: f64,
    /// Rejected trial steps before acceptance.
    pub backtracks: usize,
    /// Whether the accepted step came from the safe-step fallback.
    pub safe_step: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// `λ^p / β^(p-1)`; `None` when it underflows.
    pub alpha_bound: Option<f64>,
    /// `‖Y_0 - Y_*‖_F + ‖Y_*‖_2`.
    pub beta_bound: f64,
    /// Geometric-mean ratio of successive `‖Y_{k+1}-Y_k‖_F` over the second half of the run.
    pub empirical_contraction: Option<f64>,
    /// `κ(Y_*) = λ_max / λ_min`.
    pub condition_number: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    DualityGap,
    PrimalProgress,
    MaxIters,
    ScheduleExhausted,
    /// No admissible step could be found.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    /// Final covariance estimate.
    pub y_star: SymMatrix,
    /// Final sparse precision estimate.
    pub z_star: SymMatrix,
    pub gap: Option<f64>,
    pub iters: usize,
    pub backtracks_total: usize,
    /// `gap <= eps_opt` (which implies `Z_*` is positive definite).
    pub converged: bool,
    pub stop_reason: StopReason,
    pub trace: Vec<TraceRecord>,
    pub diagnostics: Diagnostics,
    /// Share of the `p²` entries of `Z_*` above [`ZERO_TOL`], in percent.
    pub nnz_pct: f64,
    /// Starting dual iterate.
    pub y_init: SymMatrix,
    /// Set by the box-constrained solver when the run stalled without ever
    /// certifying a solution.
    pub infeasible_suspected: bool,
}

impl SolverReport {
    /// Step sizes of the accepted iterations, in order.
    pub fn tau_schedule(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.tau).collect()
    }

    /// Last accepted step, or `None` if no step was accepted.
    pub fn last_tau(&self) -> Option<f64> {
        self.trace.last().map(|r| r.tau)
    }
}

/// Builds the starting dual iterate and checks that it is positive definite.
pub fn initial_point(s: &SymMatrix, lambda: f64, strategy: &InitStrategy) -> Result<SymMatrix> {
    let y0 = match strategy {
        InitStrategy::SPlusLambdaI => s.add_identity(lambda),
        InitStrategy::DiagSPlusLambdaI => s.diagonal_part().add_identity(lambda),
        InitStrategy::Custom(m) => {
            if m.dim() != s.dim() {
                return Err(Error::dims(s.dim(), m.dim()));
            }
            m.clone()
        }
    };
    cholesky(&y0).map_err(|_| Error::InitialPointNotPd)?;
    Ok(y0)
}

/// One update: returns `(Z_+, Y_+)` given `Y`, `Y⁻¹`, `S`, `λ` and `τ`.
pub fn gama_step(
    y: &SymMatrix,
    y_inv: &SymMatrix,
    s: &SymMatrix,
    lambda: f64,
    tau: f64,
) -> (SymMatrix, SymMatrix) {
    let p = y.dim();
    let thr = lambda / tau;
    let z = SymMatrix::from_upper_fn(p, |i, j| {
        soft_scalar(y_inv[(i, j)] + (y[(i, j)] - s[(i, j)]) / tau, thr)
    });
    let y_plus = SymMatrix::from_upper_fn(p, |i, j| {
        clip_scalar(y[(i, j)] - s[(i, j)] + tau * y_inv[(i, j)], lambda) + s[(i, j)]
    });
    (z, y_plus)
}

/// Quadratic-model test on `f(Y) = -log det Y` with gradient `-Y⁻¹`, given both
/// values of `-log det`.
pub(crate) fn descent_holds(
    neg_logdet_y: f64,
    neg_logdet_plus: f64,
    y: &SymMatrix,
    y_plus: &SymMatrix,
    y_inv: &SymMatrix,
    tau: f64,
) -> bool {
    let mut lin = 0.0;
    let mut sq = 0.0;
    for ((a, b), g) in y_plus
        .as_matrix()
        .iter()
        .zip(y.as_matrix().iter())
        .zip(y_inv.as_matrix().iter())
    {
        let d = a - b;
        lin += d * g;
        sq += d * d;
    }
    neg_logdet_plus <= neg_logdet_y - lin + sq / (2.0 * tau) + DESCENT_SLACK
}

/// Sufficient-descent check
/// `-log det Y₊ ≤ -log det Y - <Y₊ - Y, Y⁻¹> + ‖Y₊ - Y‖²_F / (2τ)`.
///
/// Returns `false` if either matrix fails the Cholesky test.
pub fn sufficient_descent_ok(y: &SymMatrix, y_plus: &SymMatrix, y_inv: &SymMatrix, tau: f64) -> bool {
    match (cholesky(y), cholesky(y_plus)) {
        (Ok(fy), Ok(fp)) => descent_holds(-fy.logdet(), -fp.logdet(), y, y_plus, y_inv, tau),
        _ => false,
    }
}

/// Barzilai-Borwein ratio `<ΔY, ΔY> / <ΔY, X_prev - X_curr>` where `X = Y⁻¹`.
///
/// `None` when the curvature term is at most `1e-300` or the ratio is not a
/// positive finite number.
pub fn bb_step(y_prev: &SymMatrix, y_curr: &SymMatrix, x_prev: &SymMatrix, x_curr: &SymMatrix) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (((yp, yc), xp), xc) in y_prev
        .as_matrix()
        .iter()
        .zip(y_curr.as_matrix().iter())
        .zip(x_prev.as_matrix().iter())
        .zip(x_curr.as_matrix().iter())
    {
        let dy = yc - yp;
        num += dy * dy;
        den += dy * (xp - xc);
    }
    if !(den > 1e-300) {
        return None;
    }
    let ratio = num / den;
    (ratio > 0.0 && ratio.is_finite()).then_some(ratio)
}

/// Duality gap `-log det Y - p - log det Z + <S, Z> + λ‖Z‖₁`.
///
/// `None` when `Z` (or `Y`) is not positive definite.
pub fn duality_gap(y: &SymMatrix, z: &SymMatrix, s: &SymMatrix, lambda: f64) -> Option<f64> {
    let fy = cholesky(y).ok()?;
    gap_with_logdet(fy.logdet(), z, s, lambda)
}

pub(crate) fn gap_with_logdet(logdet_y: f64, z: &SymMatrix, s: &SymMatrix, lambda: f64) -> Option<f64> {
    let fz = cholesky(z).ok()?;
    let p = z.dim() as f64;
    Some(-logdet_y - p - fz.logdet() + dense_inner(s.as_matrix(), z.as_matrix()) + lambda * z.l1_norm())
}

/// Largest violation of the optimality conditions of the penalized problem at `X`:
/// `|S_ij - X⁻¹_ij| ≤ λ` where `X_ij = 0`, and `S_ij - X⁻¹_ij = -λ sign(X_ij)` elsewhere.
pub fn kkt_residual(x: &SymMatrix, x_inv: &SymMatrix, s: &SymMatrix, lambda: f64) -> f64 {
    let p = x.dim();
    let mut worst = 0.0_f64;
    for j in 0..p {
        for i in 0..p {
            let r = s[(i, j)] - x_inv[(i, j)];
            let xv = x[(i, j)];
            let v = if xv.abs() <= ZERO_TOL {
                (r.abs() - lambda).max(0.0)
            } else {
                (r + lambda * xv.signum()).abs()
            };
            worst = worst.max(v);
        }
    }
    worst
}

/// Upper bound `max{|1 - τ/α²|, |1 - τ/β²|}` on the per-step contraction of
/// `‖Y_k - Y_*‖_F` when all iterates lie in `αI ⪯ Y ⪯ βI`.
pub fn contraction_bound(tau: f64, alpha: f64, beta: f64) -> f64 {
    (1.0 - tau / (alpha * alpha)).abs().max((1.0 - tau / (beta * beta)).abs())
}

/// Solves the penalized problem for sample covariance `s`.
pub fn solve(s: &SymMatrix, cfg: &SolverConfig) -> Result<SolverReport> {
    cfg.validate()?;
    let y0 = initial_point(s, cfg.lambda, &cfg.init_strategy)?;
    let set = PenaltyBox { s, lambda: cfg.lambda };
    run(&set, y0, cfg)
}

/// Feasible set of the dual problem together with the matching primal update.
pub(crate) trait DualSet {
    /// `(Z_+, Y_+)` from the current `Y`, `X = Y⁻¹` and step `τ`.
    fn step(&self, y: &SymMatrix, x: &SymMatrix, tau: f64) -> (SymMatrix, SymMatrix);
    /// Duality gap given `log det Y` and the primal iterate.
    fn gap(&self, logdet_y: f64, z: &SymMatrix) -> Option<f64>;
    /// Penalty scale used for the `α` bound in diagnostics.
    fn lambda_scale(&self) -> f64;
}

/// `‖Y - S‖_∞ ≤ λ`.
pub(crate) struct PenaltyBox<'a> {
    pub s: &'a SymMatrix,
    pub lambda: f64,
}

impl DualSet for PenaltyBox<'_> {
    fn step(&self, y: &SymMatrix, x: &SymMatrix, tau: f64) -> (SymMatrix, SymMatrix) {
        gama_step(y, x, self.s, self.lambda, tau)
    }

    fn gap(&self, logdet_y: f64, z: &SymMatrix) -> Option<f64> {
        gap_with_logdet(logdet_y, z, self.s, self.lambda)
    }

    fn lambda_scale(&self) -> f64 {
        self.lambda
    }
}

struct AcceptedStep {
    tau: f64,
    z: SymMatrix,
    y_plus: SymMatrix,
    factor: CholeskyFactor,
    backtracks: usize,
    safe: bool,
}

struct Iterate {
    y: SymMatrix,
    x: SymMatrix,
    logdet: f64,
}

fn try_step<D: DualSet>(set: &D, cur: &Iterate, tau: f64, check_descent: bool) -> Option<(SymMatrix, SymMatrix, CholeskyFactor)> {
    let (z, y_plus) = set.step(&cur.y, &cur.x, tau);
    let factor = cholesky(&y_plus).ok()?;
    if check_descent && !descent_holds(-cur.logdet, -factor.logdet(), &cur.y, &y_plus, &cur.x, tau) {
        return None;
    }
    Some((z, y_plus, factor))
}

fn line_search<D: DualSet>(set: &D, cur: &Iterate, tau0: f64, cfg: &SolverConfig) -> Option<AcceptedStep> {
    let mut tau = tau0;
    for j in 0..cfg.max_backtracks {
        if let Some((z, y_plus, factor)) = try_step(set, cur, tau, true) {
            return Some(AcceptedStep { tau, z, y_plus, factor, backtracks: j, safe: false });
        }
        tau *= cfg.backtrack_c;
    }
    // safe step from the smallest eigenvalue of the current iterate
    let (alpha, _) = extreme_eigenvalues(&cur.y);
    let mut tau = 0.9 * alpha * alpha;
    for j in 0..SAFE_STEP_RETRIES {
        if !(tau > 0.0) {
            break;
        }
        if let Some((z, y_plus, factor)) = try_step(set, cur, tau, true) {
            return Some(AcceptedStep {
                tau,
                z,
                y_plus,
                factor,
                backtracks: cfg.max_backtracks + j,
                safe: true,
            });
        }
        tau *= cfg.backtrack_c;
    }
    None
}

/// Shared iteration loop for every dual-box variant.
pub(crate) fn run<D: DualSet>(set: &D, y0: SymMatrix, cfg: &SolverConfig) -> Result<SolverReport> {
    let f0 = cholesky(&y0).map_err(|_| Error::InitialPointNotPd)?;
    let p = y0.dim();
    let mut cur = Iterate { logdet: f0.logdet(), x: f0.inverse(), y: y0.clone() };
    let mut z = SymMatrix::zeros(p);
    let mut gap = None;
    let mut trace = Vec::new();
    let mut backtracks_total = 0;
    let mut tau_proposal = cfg.tau_init;
    let mut stop_reason = StopReason::MaxIters;

    for k in 0..cfg.max_iters {
        let step = match &cfg.step_rule {
            StepRule::Adaptive => line_search(set, &cur, tau_proposal, cfg),
            StepRule::Fixed(t) => try_step(set, &cur, *t, false).map(|(z, y_plus, factor)| {
                AcceptedStep { tau: *t, z, y_plus, factor, backtracks: 0, safe: false }
            }),
            StepRule::Schedule(ts) => {
                let Some(&t) = ts.get(k) else {
                    stop_reason = StopReason::ScheduleExhausted;
                    break;
                };
                try_step(set, &cur, t, false).map(|(z, y_plus, factor)| AcceptedStep {
                    tau: t,
                    z,
                    y_plus,
                    factor,
                    backtracks: 0,
                    safe: false,
                })
            }
        };
        let Some(step) = step else {
            log::debug!("no admissible step at iteration {}", k + 1);
            stop_reason = StopReason::Stalled;
            break;
        };

        let logdet_plus = step.factor.logdet();
        let x_plus = step.factor.inverse();
        let frob_change = frob_distance(&step.y_plus, &cur.y);
        let prim_progress = frob_change / frob_norm(&cur.y);
        gap = set.gap(logdet_plus, &step.z);
        if matches!(cfg.step_rule, StepRule::Adaptive) {
            tau_proposal = bb_step(&cur.y, &step.y_plus, &cur.x, &x_plus).unwrap_or(step.tau);
        }
        backtracks_total += step.backtracks;
        trace.push(TraceRecord {
            iter: k + 1,
            gap,
            tau: step.tau,
            frob_change,
            neg_logdet: -logdet_plus,
            backtracks: step.backtracks,
            safe_step: step.safe,
        });
        cur = Iterate { y: step.y_plus, x: x_plus, logdet: logdet_plus };
        z = step.z;

        if gap.is_some_and(|g| g <= cfg.eps_opt) {
            stop_reason = StopReason::DualityGap;
            break;
        }
        if cfg.eps_prim > 0.0 && prim_progress <= cfg.eps_prim {
            stop_reason = StopReason::PrimalProgress;
            break;
        }
    }

    let converged = gap.is_some_and(|g| g <= cfg.eps_opt);
    let diagnostics = diagnostics(&y0, &cur.y, set.lambda_scale(), &trace);
    let nnz_pct = 100.0 * z.count_nonzero(ZERO_TOL) as f64 / (p * p) as f64;
    Ok(SolverReport {
        y_star: cur.y,
        z_star: z,
        gap,
        iters: trace.len(),
        backtracks_total,
        converged,
        stop_reason,
        trace,
        diagnostics,
        nnz_pct,
        y_init: y0,
        infeasible_suspected: false,
    })
}

fn diagnostics(y0: &SymMatrix, y_star: &SymMatrix, lambda: f64, trace: &[TraceRecord]) -> Diagnostics {
    let (lambda_min, lambda_max) = extreme_eigenvalues(y_star);
    let beta = frob_distance(y0, y_star) + lambda_max;
    let p = y_star.dim() as f64;
    let log_alpha = p * lambda.ln() - (p - 1.0) * beta.ln();
    let alpha_bound = (log_alpha.is_finite() && log_alpha > f64::MIN_POSITIVE.ln()).then(|| log_alpha.exp());
    Diagnostics {
        alpha_bound,
        beta_bound: beta,
        empirical_contraction: empirical_contraction(trace),
        condition_number: lambda_max / lambda_min,
        lambda_min,
        lambda_max,
    }
}

fn empirical_contraction(trace: &[TraceRecord]) -> Option<f64> {
    let tail: Vec<f64> = trace[trace.len() / 2..]
        .iter()
        .map(|r| r.frob_change)
        .filter(|d| *d > 0.0)
        .collect();
    if tail.len() < 2 {
        return None;
    }
    let first = tail[0];
    let last = tail[tail.len() - 1];
    Some((last / first).powf(1.0 / (tail.len() - 1) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::max_abs;
    use approx::assert_relative_eq;

    fn m1(v: f64) -> SymMatrix {
        SymMatrix::from_rows(&[vec![v]]).unwrap()
    }

    fn m2(a: f64, b: f64, c: f64) -> SymMatrix {
        SymMatrix::from_rows(&[vec![a, b], vec![b, c]]).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(0.1).validate().is_ok());
        let mut c = SolverConfig::new(0.1);
        c.backtrack_c = 1.0;
        assert!(c.validate().is_err());
        let mut c = SolverConfig::new(0.1);
        c.eps_opt = 0.0;
        assert!(c.validate().is_err());
        let c = SolverConfig::new(0.1).with_step_rule(StepRule::Fixed(-1.0));
        assert!(c.validate().is_err());
        assert!(SolverConfig::new(-0.5).validate().is_err());
    }

    #[test]
    fn initial_point_examples() {
        let y = initial_point(&SymMatrix::from_diagonal(&[1.0, 2.0]), 0.5, &InitStrategy::SPlusLambdaI).unwrap();
        assert_eq!(y, SymMatrix::from_diagonal(&[1.5, 2.5]));
        let y = initial_point(&m2(1.0, 0.3, 1.0), 0.1, &InitStrategy::DiagSPlusLambdaI).unwrap();
        assert_eq!(y, SymMatrix::from_diagonal(&[1.1, 1.1]));
        let bad = InitStrategy::Custom(m2(1.0, 2.0, 1.0));
        assert!(matches!(initial_point(&m2(1.0, 0.3, 1.0), 0.1, &bad), Err(Error::InitialPointNotPd)));
        let s = m2(1.0, 2.0, 1.0);
        assert!(initial_point(&s, 0.1, &InitStrategy::SPlusLambdaI).is_err());
    }

    #[test]
    fn scalar_step_at_optimum() {
        // S = 2, λ = 1: Y - S + τ/Y = 1 + 1/3 clips to 1, so Y stays at 3.
        let (z, y_plus) = gama_step(&m1(3.0), &m1(1.0 / 3.0), &m1(2.0), 1.0, 1.0);
        assert_eq!(y_plus[(0, 0)], 3.0);
        assert_relative_eq!(z[(0, 0)], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn step_is_consistent_with_primal_update() {
        let s = m2(1.0, 0.3, 1.0);
        let y = m2(1.4, 0.1, 1.2);
        let x = cholesky(&y).unwrap().inverse();
        for tau in [0.01, 0.3, 1.0, 7.0] {
            let (z, y_plus) = gama_step(&y, &x, &s, 0.2, tau);
            let alt = y.add(&x.sub(&z).scale(tau));
            assert!(max_abs(&alt.sub(&y_plus)) <= 1e-12, "tau {tau}");
        }
    }

    #[test]
    fn huge_lambda_makes_clip_inactive() {
        let s = m2(1.0, 0.3, 1.0);
        let y = m2(1.4, 0.1, 1.2);
        let x = cholesky(&y).unwrap().inverse();
        let (_, y_plus) = gama_step(&y, &x, &s, 1e6, 0.5);
        let expected = y.add(&x.scale(0.5));
        assert!(max_abs(&expected.sub(&y_plus)) <= 1e-12);
    }

    #[test]
    fn descent_examples() {
        let y = m2(1.4, 0.1, 1.2);
        let x = cholesky(&y).unwrap().inverse();
        assert!(sufficient_descent_ok(&y, &y, &x, 1.0));
        // f(0.1) = 2.303 against the model value 0 + 0.9 + 0.0405
        assert!(!sufficient_descent_ok(&m1(1.0), &m1(0.1), &m1(1.0), 10.0));
        // τ ≤ λ_min² along the segment guarantees the quadratic bound
        let s = m2(1.0, 0.3, 1.0);
        let tau = 0.9 * extreme_eigenvalues(&y).0.powi(2) * 0.5;
        let (_, y_plus) = gama_step(&y, &x, &s, 0.2, tau);
        assert!(sufficient_descent_ok(&y, &y_plus, &x, tau));
    }

    #[test]
    fn bb_examples() {
        let i2 = SymMatrix::identity(2);
        let z2 = SymMatrix::zeros(2);
        // ΔY = I, X_prev - X_curr = 2I
        let tau = bb_step(&z2, &i2, &i2.scale(2.0), &z2).unwrap();
        assert_eq!(tau, 0.5);
        assert_eq!(bb_step(&i2, &i2, &i2, &z2), None);
        assert_eq!(bb_step(&z2, &i2, &z2, &i2), None);
    }

    #[test]
    fn gap_examples() {
        // -log 3 - 1 + log 3 + 2/3 + 1/3
        let g = duality_gap(&m1(3.0), &m1(1.0 / 3.0), &m1(2.0), 1.0).unwrap();
        assert!(g.abs() < 1e-15, "{g}");
        assert_eq!(duality_gap(&m1(3.0), &m1(-1.0), &m1(2.0), 1.0), None);
    }

    #[test]
    fn kkt_examples() {
        assert!(kkt_residual(&m1(1.0 / 3.0), &m1(3.0), &m1(2.0), 1.0) < 1e-15);
        let i2 = SymMatrix::identity(2);
        assert_eq!(kkt_residual(&i2, &i2, &i2, 0.5), 0.5);
    }

    #[test]
    fn scalar_solve() {
        let r = solve(&m1(2.0), &SolverConfig::new(1.0)).unwrap();
        assert!(r.converged);
        assert_relative_eq!(r.y_star[(0, 0)], 3.0, epsilon = 1e-8);
        assert_relative_eq!(r.z_star[(0, 0)], 1.0 / 3.0, epsilon = 1e-8);
        assert!(r.gap.unwrap() <= 1e-8);
    }

    #[test]
    fn diagonal_solve() {
        let s = SymMatrix::from_diagonal(&[1.0, 2.0]);
        let r = solve(&s, &SolverConfig::new(0.5).with_eps_opt(1e-12)).unwrap();
        assert!(r.converged);
        assert!(max_abs(&r.y_star.sub(&SymMatrix::from_diagonal(&[1.5, 2.5]))) < 1e-8);
        assert!(max_abs(&r.z_star.sub(&SymMatrix::from_diagonal(&[2.0 / 3.0, 0.4]))) < 1e-8);
    }

    #[test]
    fn two_by_two_solve() {
        let s = m2(1.0, 0.3, 1.0);
        let r = solve(&s, &SolverConfig::new(0.1).with_eps_opt(1e-12)).unwrap();
        assert!(r.converged);
        assert!(max_abs(&r.y_star.sub(&m2(1.1, 0.2, 1.1))) < 1e-8);
        let expected = m2(1.1, -0.2, 1.1).scale(1.0 / 1.17);
        assert!(max_abs(&r.z_star.sub(&expected)) < 1e-8);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let s = m2(1.0, 0.3, 1.0);
        let cfg = SolverConfig::new(0.1).with_max_iters(3).with_step_rule(StepRule::Fixed(0.01));
        let r = solve(&s, &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iters, 3);
        assert_eq!(r.stop_reason, StopReason::MaxIters);
    }

    #[test]
    fn schedule_replays_and_stops() {
        let s = m2(1.0, 0.3, 1.0);
        let cfg = SolverConfig::new(0.1).with_step_rule(StepRule::Schedule(vec![0.02, 0.01]));
        let r = solve(&s, &cfg).unwrap();
        assert_eq!(r.iters, 2);
        assert_eq!(r.stop_reason, StopReason::ScheduleExhausted);
        assert_eq!(r.tau_schedule(), vec![0.02, 0.01]);
    }

    #[test]
    fn contraction_bound_values() {
        assert_eq!(contraction_bound(1.0, 1.0, 2.0), 0.75);
        assert_eq!(contraction_bound(0.5, 1.0, 1.0), 0.5);
    }
}
