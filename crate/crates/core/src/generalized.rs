//! Two extensions of the basic estimator.
//!
//! **Box constraints.** Maximize `log det Y` subject to `L ≤ Y ≤ U`
//! entrywise. Writing `S̄ = (L + U)/2` and `Λ̄ = (U - L)/2` turns this into
//! the standard dual with a per-entry penalty, whose primal is
//! `-log det X + <S̄, X> + Σ Λ̄_ij |X_ij|`. The shared iteration loop runs
//! unchanged with the update `Y₊ = Π_[L,U](Y + τ Y⁻¹)`.
//!
//! **Penalty on a linear transform.** Minimize
//! `-log det X + <S, X> + λ ‖Aᵀ X B‖₁` with `A` of size `p x q` and `B` of
//! size `p x r`. The dual variable `Y` is `q x r` with `‖Y‖_∞ ≤ λ` and
//!
//! ```text
//! M(Y) = S + (A Y Bᵀ + B Yᵀ Aᵀ) / 2,    X(Y) = M(Y)⁻¹,    ∇ log det M = Aᵀ X B
//! Y₊ = clip(Y + τ Aᵀ X B, λ)
//! ```
//!
//! With `A = B = I` and symmetric `Y` this is the basic problem with the dual
//! variable shifted by `S`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{cholesky, dense_inner, extreme_eigenvalues, CholeskyFactor, SymMatrix};
use crate::prox::{box_project_unchecked, clip_scalar, soft_scalar, validate_box};
use crate::solver::{
    gap_with_logdet, initial_point, run, DualSet, InitStrategy, SolverConfig, SolverReport, StepRule,
    StopReason, TraceRecord, DESCENT_SLACK, SAFE_STEP_RETRIES, ZERO_TOL,
};

const INIT_RETRIES: usize = 8;

/// Entrywise bounds `L ≤ Y ≤ U` on the covariance estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSpec {
    pub lower: SymMatrix,
    pub upper: SymMatrix,
}

impl BoundSpec {
    /// Checks dimensions and `lower ≤ upper`. Symmetry and finiteness come from [`SymMatrix`].
    pub fn new(lower: SymMatrix, upper: SymMatrix) -> Result<Self> {
        validate_box(&lower, &upper, lower.dim())?;
        Ok(BoundSpec { lower, upper })
    }

    /// `[S - λ, S + λ]`, the feasible set of the basic dual.
    pub fn around(s: &SymMatrix, lambda: f64) -> Result<Self> {
        Self::new(s.map(|v| v - lambda), s.map(|v| v + lambda))
    }

    pub fn dim(&self) -> usize {
        self.lower.dim()
    }
}

/// Interval midpoints `S̄` and half-widths `Λ̄`.
pub fn translate_bounds(bounds: &BoundSpec) -> (SymMatrix, SymMatrix) {
    let s_bar = bounds.lower.zip_map(&bounds.upper, |l, u| 0.5 * (l + u));
    let lam_bar = bounds.lower.zip_map(&bounds.upper, |l, u| 0.5 * (u - l));
    (s_bar, lam_bar)
}

pub(crate) struct BoundBox<'a> {
    bounds: &'a BoundSpec,
    s_bar: SymMatrix,
    lam_bar: SymMatrix,
}

impl<'a> BoundBox<'a> {
    fn new(bounds: &'a BoundSpec) -> Self {
        let (s_bar, lam_bar) = translate_bounds(bounds);
        BoundBox { bounds, s_bar, lam_bar }
    }
}

impl DualSet for BoundBox<'_> {
    fn step(&self, y: &SymMatrix, x: &SymMatrix, tau: f64) -> (SymMatrix, SymMatrix) {
        let p = y.dim();
        let z = SymMatrix::from_upper_fn(p, |i, j| {
            soft_scalar(x[(i, j)] + (y[(i, j)] - self.s_bar[(i, j)]) / tau, self.lam_bar[(i, j)] / tau)
        });
        let moved = SymMatrix::from_upper_fn(p, |i, j| y[(i, j)] + tau * x[(i, j)]);
        (z, box_project_unchecked(&moved, &self.bounds.lower, &self.bounds.upper))
    }

    fn gap(&self, logdet_y: f64, z: &SymMatrix) -> Option<f64> {
        let weighted: f64 = z
            .as_matrix()
            .iter()
            .zip(self.lam_bar.as_matrix().iter())
            .map(|(v, w)| w * v.abs())
            .sum();
        gap_with_logdet(logdet_y, z, &self.s_bar, 0.0).map(|g| g + weighted)
    }

    fn lambda_scale(&self) -> f64 {
        self.lam_bar.as_matrix().min()
    }
}

fn box_start(bounds: &BoundSpec, cfg: &SolverConfig, s_bar: &SymMatrix) -> Result<SymMatrix> {
    let p = bounds.dim();
    let base = match &cfg.init_strategy {
        InitStrategy::Custom(m) => {
            if m.dim() != p {
                return Err(Error::dims(p, m.dim()));
            }
            if box_project_unchecked(m, &bounds.lower, &bounds.upper) != *m {
                return Err(Error::InvalidArgument("custom initial point lies outside the bounds".into()));
            }
            return initial_point(m, 0.0, &cfg.init_strategy);
        }
        InitStrategy::SPlusLambdaI => s_bar.clone(),
        InitStrategy::DiagSPlusLambdaI => s_bar.diagonal_part(),
    };
    let mut delta = (s_bar.trace() / p as f64).max(1.0) * 1e-2;
    for _ in 0..=INIT_RETRIES {
        let y0 = box_project_unchecked(&base.add_identity(delta), &bounds.lower, &bounds.upper);
        if cholesky(&y0).is_ok() {
            return Ok(y0);
        }
        delta *= 10.0;
    }
    // most diagonally dominant point of the box: diagonal at the upper bound,
    // off-diagonal entries as close to zero as the bounds allow
    let dominant = SymMatrix::from_upper_fn(p, |i, j| if i == j { bounds.upper[(i, i)] } else { 0.0 });
    let y0 = box_project_unchecked(&dominant, &bounds.lower, &bounds.upper);
    if cholesky(&y0).is_ok() {
        return Ok(y0);
    }
    Err(Error::InfeasibleBounds)
}

/// Maximizes `log det Y` over the box. `cfg.lambda` is not used; the
/// per-entry penalty comes from the bounds.
///
/// The start is `Π(S̄ + δI)` (or `Π(diag(S̄) + δI)`) with
/// `δ = max(tr(S̄)/p, 1) · 1e-2`, grown tenfold until it is positive
/// definite. Failing that, the box point with the upper diagonal and
/// off-diagonal entries nearest zero is tried; [`Error::InfeasibleBounds`]
/// if that is not positive definite either. A run that stalls
/// without a certified gap sets `infeasible_suspected`, since positive
/// definite points inside a box are not guaranteed to exist.
pub fn solve_box(bounds: &BoundSpec, cfg: &SolverConfig) -> Result<SolverReport> {
    cfg.validate()?;
    let set = BoundBox::new(bounds);
    let y0 = box_start(bounds, cfg, &set.s_bar)?;
    let mut report = run(&set, y0, cfg)?;
    report.infeasible_suspected = !report.converged && report.stop_reason == StopReason::Stalled;
    Ok(report)
}

/// Linear maps of the transformed penalty `‖Aᵀ X B‖₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMapPair {
    /// `p x q`.
    pub a: DMatrix<f64>,
    /// `p x r`.
    pub b: DMatrix<f64>,
}

impl LinearMapPair {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != b.nrows() {
            return Err(Error::dims(format!("{} rows in B", a.nrows()), b.nrows()));
        }
        if a.ncols() == 0 || b.ncols() == 0 || a.nrows() == 0 {
            return Err(Error::InvalidArgument("linear maps must be non-empty".into()));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("linear maps must be finite".into()));
        }
        Ok(LinearMapPair { a, b })
    }

    pub fn identity(p: usize) -> Self {
        LinearMapPair { a: DMatrix::identity(p, p), b: DMatrix::identity(p, p) }
    }

    /// Shape `(q, r)` of the dual variable.
    pub fn dual_shape(&self) -> (usize, usize) {
        (self.a.ncols(), self.b.ncols())
    }

    fn check(&self, p: usize) -> Result<()> {
        if self.a.nrows() != p {
            return Err(Error::dims(format!("maps with {p} rows"), self.a.nrows()));
        }
        Ok(())
    }

    /// `S + (A Y Bᵀ + B Yᵀ Aᵀ) / 2`.
    pub fn pairing(&self, s: &SymMatrix, y: &DMatrix<f64>) -> SymMatrix {
        let ayb = &self.a * y * self.b.transpose();
        SymMatrix::from_upper_fn(s.dim(), |i, j| s[(i, j)] + 0.5 * (ayb[(i, j)] + ayb[(j, i)]))
    }

    /// `Aᵀ X B`.
    pub fn transform(&self, x: &SymMatrix) -> DMatrix<f64> {
        self.a.transpose() * x.as_matrix() * &self.b
    }
}

/// One projected-gradient step on the transformed dual:
/// `Y₊ = clip(Y + τ Aᵀ (S + sym(A Y Bᵀ))⁻¹ B, λ)`.
///
/// Fails with [`Error::NotPositiveDefinite`] when the pairing is not positive definite.
pub fn linear_penalty_step(
    y: &DMatrix<f64>,
    s: &SymMatrix,
    maps: &LinearMapPair,
    lambda: f64,
    tau: f64,
) -> Result<DMatrix<f64>> {
    maps.check(s.dim())?;
    if y.shape() != maps.dual_shape() {
        return Err(Error::dims(format!("{:?}", maps.dual_shape()), format!("{:?}", y.shape())));
    }
    let x = cholesky(&maps.pairing(s, y))?.inverse();
    let g = maps.transform(&x);
    Ok(y.zip_map(&g, |yv, gv| clip_scalar(yv + tau * gv, lambda)))
}

/// Result of [`solve_linear_penalty`].
#[derive(Debug, Clone)]
pub struct LinearPenaltyReport {
    /// Dual variable, `q x r`.
    pub y_star: DMatrix<f64>,
    /// Primal precision `(S + sym(A Y_* Bᵀ))⁻¹`.
    pub x_star: SymMatrix,
    /// Sparse estimate of `Aᵀ X B`, `q x r`.
    pub z_star: DMatrix<f64>,
    /// Primal minus dual objective at `(X_*, Y_*)`.
    pub gap: f64,
    pub iters: usize,
    pub backtracks_total: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// `neg_logdet` holds `-log det M(Y_k)`.
    pub trace: Vec<TraceRecord>,
}

struct LinearIterate {
    y: DMatrix<f64>,
    x: SymMatrix,
    g: DMatrix<f64>,
    logdet: f64,
}

impl LinearIterate {
    fn at(y: DMatrix<f64>, s: &SymMatrix, maps: &LinearMapPair) -> Option<Self> {
        let factor: CholeskyFactor = cholesky(&maps.pairing(s, &y)).ok()?;
        let x = factor.inverse();
        let g = maps.transform(&x);
        Some(LinearIterate { y, x, g, logdet: factor.logdet() })
    }

    /// `λ‖G‖₁ - <Y, G>`. With `X = M(Y)⁻¹` this equals the primal value
    /// `-log det X + <S, X> + λ‖Aᵀ X B‖₁` minus the dual value `log det M(Y) + p`,
    /// since `<S, X> = p - <Y, G>`.
    fn gap(&self, lambda: f64) -> f64 {
        lambda * self.g.iter().map(|v| v.abs()).sum::<f64>() - dense_inner(&self.y, &self.g)
    }
}

fn linear_trial(
    cur: &LinearIterate,
    s: &SymMatrix,
    maps: &LinearMapPair,
    lambda: f64,
    tau: f64,
    check_descent: bool,
) -> Option<LinearIterate> {
    let y_plus = cur.y.zip_map(&cur.g, |yv, gv| clip_scalar(yv + tau * gv, lambda));
    let next = LinearIterate::at(y_plus, s, maps)?;
    if check_descent {
        // f = -log det M, ∇f = -G
        let d = &next.y - &cur.y;
        let model = -cur.logdet - dense_inner(&d, &cur.g) + d.norm_squared() / (2.0 * tau);
        if -next.logdet > model + DESCENT_SLACK {
            return None;
        }
    }
    Some(next)
}

/// Solves the transformed-penalty problem from `Y₀ = 0`.
///
/// Uses the same step rules, tolerances and iteration limits as the basic
/// solver; `cfg.init_strategy` is ignored. `S` must be positive definite.
pub fn solve_linear_penalty(
    s: &SymMatrix,
    maps: &LinearMapPair,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<LinearPenaltyReport> {
    cfg.validate()?;
    maps.check(s.dim())?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let (q, r) = maps.dual_shape();
    let mut cur = LinearIterate::at(DMatrix::zeros(q, r), s, maps).ok_or(Error::InitialPointNotPd)?;
    // curvature scale of the composed map for the safe step
    let map_norm = maps.a.norm() * maps.b.norm();

    let mut trace = Vec::new();
    let mut backtracks_total = 0;
    let mut tau_proposal = cfg.tau_init;
    let mut stop_reason = StopReason::MaxIters;
    let mut gap = cur.gap(lambda);
    if gap <= cfg.eps_opt {
        stop_reason = StopReason::DualityGap;
    }

    let mut k = 0;
    while stop_reason == StopReason::MaxIters && k < cfg.max_iters {
        let accepted = match &cfg.step_rule {
            StepRule::Fixed(t) => linear_trial(&cur, s, maps, lambda, *t, false).map(|n| (n, *t, 0, false)),
            StepRule::Schedule(ts) => match ts.get(k) {
                Some(&t) => linear_trial(&cur, s, maps, lambda, t, false).map(|n| (n, t, 0, false)),
                None => {
                    stop_reason = StopReason::ScheduleExhausted;
                    break;
                }
            },
            StepRule::Adaptive => {
                let mut found = None;
                let mut tau = tau_proposal;
                for j in 0..cfg.max_backtracks {
                    if let Some(n) = linear_trial(&cur, s, maps, lambda, tau, true) {
                        found = Some((n, tau, j, false));
                        break;
                    }
                    tau *= cfg.backtrack_c;
                }
                if found.is_none() {
                    let m = maps.pairing(s, &cur.y);
                    let (lo, _) = extreme_eigenvalues(&m);
                    let mut tau = 0.9 * lo * lo / (map_norm * map_norm);
                    for j in 0..SAFE_STEP_RETRIES {
                        if let Some(n) = linear_trial(&cur, s, maps, lambda, tau, true) {
                            found = Some((n, tau, cfg.max_backtracks + j, true));
                            break;
                        }
                        tau *= cfg.backtrack_c;
                    }
                }
                found
            }
        };
        let Some((next, tau, backtracks, safe)) = accepted else {
            stop_reason = StopReason::Stalled;
            break;
        };
        k += 1;
        let dy = &next.y - &cur.y;
        let frob_change = dy.norm();
        if matches!(cfg.step_rule, StepRule::Adaptive) {
            let den = dense_inner(&dy, &(&cur.g - &next.g));
            let ratio = dy.norm_squared() / den;
            tau_proposal = if den > 1e-300 && ratio > 0.0 && ratio.is_finite() { ratio } else { tau };
        }
        let prim_progress = frob_change / cur.y.norm();
        gap = next.gap(lambda);
        backtracks_total += backtracks;
        trace.push(TraceRecord {
            iter: k,
            gap: Some(gap),
            tau,
            frob_change,
            neg_logdet: -next.logdet,
            backtracks,
            safe_step: safe,
        });
        cur = next;
        if gap <= cfg.eps_opt {
            stop_reason = StopReason::DualityGap;
        } else if cfg.eps_prim > 0.0 && prim_progress <= cfg.eps_prim {
            stop_reason = StopReason::PrimalProgress;
        }
    }

    let tau_last = trace.last().map_or(cfg.tau_init, |t: &TraceRecord| t.tau);
    let thr = lambda / tau_last;
    let z_star = cur.g.zip_map(&cur.y, |gv, yv| {
        let z = soft_scalar(gv + yv / tau_last, thr);
        if z.abs() <= ZERO_TOL {
            0.0
        } else {
            z
        }
    });
    Ok(LinearPenaltyReport {
        y_star: cur.y,
        x_star: cur.x,
        z_star,
        gap,
        iters: trace.len(),
        backtracks_total,
        converged: gap <= cfg.eps_opt,
        stop_reason,
        trace,
    })
}
