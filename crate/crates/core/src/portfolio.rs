//! Minimum-variance rebalancing backtest.
//!
//! Time is indexed by rows of a `T x p` returns matrix, with row `t - 1`
//! holding period `t`. Block `j = 1..K` estimates a covariance from the
//! `n_estim` rows before it, solves for a sparse precision, forms
//! minimum-variance weights and holds them for `L` periods, rows
//! `n_estim + (j-1)L .. n_estim + jL`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{extreme_eigenvalues, SymMatrix};
use crate::problem::{sample_covariance, Divisor};
use crate::solver::{solve, SolverConfig};

/// Penalty used for each block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    Fixed(f64),
    /// `f · λ_max(S)` of the block's own sample covariance.
    SpectralFraction(f64),
}

impl LambdaRule {
    pub fn lambda_for(&self, s: &SymMatrix) -> f64 {
        match *self {
            LambdaRule::Fixed(l) => l,
            LambdaRule::SpectralFraction(f) => f * extreme_eigenvalues(s).1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RebalancePlan {
    pub n_estim: usize,
    pub hold_len: usize,
    pub n_blocks: usize,
    pub n_assets: usize,
    pub lambda_rule: LambdaRule,
    pub divisor: Divisor,
    /// Risk-free return per period.
    pub risk_free: f64,
    /// Per-asset transaction cost `η_i`; empty means zero.
    pub costs: Vec<f64>,
}

impl RebalancePlan {
    pub fn new(n_estim: usize, hold_len: usize, n_blocks: usize, n_assets: usize, lambda_rule: LambdaRule) -> Self {
        RebalancePlan {
            n_estim,
            hold_len,
            n_blocks,
            n_assets,
            lambda_rule,
            divisor: Divisor::N,
            risk_free: 0.0,
            costs: Vec::new(),
        }
    }

    /// `n_estim + K · L`.
    pub fn total_periods(&self) -> usize {
        self.n_estim + self.n_blocks * self.hold_len
    }

    fn validate(&self, returns: &DMatrix<f64>) -> Result<()> {
        if self.n_estim == 0 || self.hold_len == 0 || self.n_blocks == 0 || self.n_assets == 0 {
            return Err(Error::InvalidArgument("plan sizes must be positive".into()));
        }
        if returns.nrows() != self.total_periods() || returns.ncols() != self.n_assets {
            return Err(Error::dims(
                format!("{} x {}", self.total_periods(), self.n_assets),
                format!("{} x {}", returns.nrows(), returns.ncols()),
            ));
        }
        if !self.costs.is_empty() && self.costs.len() != self.n_assets {
            return Err(Error::dims(self.n_assets, format!("{} costs", self.costs.len())));
        }
        if self.costs.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::InvalidArgument("costs must be finite and non-negative".into()));
        }
        for j in 0..returns.ncols() {
            for i in 0..returns.nrows() {
                if !returns[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(())
    }
}

/// Precision matrix returned by an estimator, with optional solver details.
#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    pub precision: SymMatrix,
    pub iters: usize,
    pub gap: Option<f64>,
}

/// Anything that turns a sample covariance and a penalty into a precision matrix.
pub trait PrecisionEstimator {
    fn estimate(&self, s: &SymMatrix, lambda: f64) -> Result<PrecisionEstimate>;
}

impl<F> PrecisionEstimator for F
where
    F: Fn(&SymMatrix, f64) -> Result<SymMatrix>,
{
    fn estimate(&self, s: &SymMatrix, lambda: f64) -> Result<PrecisionEstimate> {
        Ok(PrecisionEstimate { precision: self(s, lambda)?, iters: 0, gap: None })
    }
}

/// The sparse estimator of this crate; `config.lambda` is replaced per block.
#[derive(Debug, Clone)]
pub struct GamaEstimator {
    pub config: SolverConfig,
}

impl PrecisionEstimator for GamaEstimator {
    fn estimate(&self, s: &SymMatrix, lambda: f64) -> Result<PrecisionEstimate> {
        let cfg = SolverConfig { lambda, ..self.config.clone() };
        let r = solve(s, &cfg)?;
        if !r.converged {
            return Err(Error::NonConvergence(format!(
                "stopped after {} iterations ({:?}), gap {:?}",
                r.iters, r.stop_reason, r.gap
            )));
        }
        Ok(PrecisionEstimate { precision: r.z_star, iters: r.iters, gap: r.gap })
    }
}

/// `w = Ω1 / (1ᵀΩ1)`.
pub fn min_variance_weights(precision: &SymMatrix) -> Result<Vec<f64>> {
    let ones = vec![1.0; precision.dim()];
    let v = precision.mul_vec(&ones);
    let denom: f64 = v.iter().sum();
    if !(denom > 1e-300) {
        return Err(Error::InvalidArgument(format!("1ᵀΩ1 = {denom:e} is not positive")));
    }
    Ok(v.into_iter().map(|x| x / denom).collect())
}

fn drift_terms<'a>(
    w_curr: &'a [f64],
    w_prev: &'a [f64],
    block_returns: &'a DMatrix<f64>,
) -> impl Iterator<Item = f64> + 'a {
    (0..w_curr.len()).map(move |i| {
        let growth: f64 = block_returns.column(i).iter().map(|r| 1.0 + r).product();
        (w_curr[i] - growth * w_prev[i]).abs()
    })
}

/// `Σ_i |w_curr_i - Π_t (1 + r_ti) · w_prev_i|` with the product over the rows of `block_returns`.
pub fn turnover(w_curr: &[f64], w_prev: &[f64], block_returns: &DMatrix<f64>) -> Result<f64> {
    if w_curr.len() != w_prev.len() || block_returns.ncols() != w_curr.len() {
        return Err(Error::dims(
            w_curr.len(),
            format!("{} previous weights, {} return columns", w_prev.len(), block_returns.ncols()),
        ));
    }
    Ok(drift_terms(w_curr, w_prev, block_returns).sum())
}

/// `Σ|min(w_i, 0)| / Σ|w_i|`.
pub fn short_side(w: &[f64]) -> f64 {
    let gross: f64 = w.iter().map(|v| v.abs()).sum();
    let short: f64 = w.iter().map(|v| v.min(0.0).abs()).sum();
    if gross > 0.0 {
        short / gross
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockRecord {
    /// 1-based block index.
    pub block: usize,
    pub lambda: f64,
    pub iters: usize,
    pub gap: Option<f64>,
    pub turnover: f64,
    pub transaction_cost: f64,
    pub short_side: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    /// `r_p`, mean per-period portfolio return.
    pub realized_return: f64,
    /// `σ_p`.
    pub realized_risk: f64,
    /// `(r_p - r_f) / σ_p`; infinite or NaN when `σ_p = 0`.
    pub sharpe: f64,
    /// `TO(j)` for `j = 1..K`.
    pub turnover_series: Vec<f64>,
    /// `W(t)` for `t = n_estim ..= n_estim + K·L`; the first entry is 1.
    pub wealth_curve: Vec<f64>,
    /// Mean over blocks of the short-side ratio.
    pub short_side_mean: f64,
    pub weights_per_block: Vec<Vec<f64>>,
    pub blocks: Vec<BlockRecord>,
}

/// Runs the rebalancing protocol. Any estimator failure aborts with [`Error::Block`].
pub fn backtest(
    returns: &DMatrix<f64>,
    plan: &RebalancePlan,
    estimator: &dyn PrecisionEstimator,
) -> Result<BacktestReport> {
    plan.validate(returns)?;
    let (l, k, p) = (plan.hold_len, plan.n_blocks, plan.n_assets);
    let costs = if plan.costs.is_empty() { vec![0.0; p] } else { plan.costs.clone() };

    let mut w_prev = vec![0.0; p];
    let mut wealth = Vec::with_capacity(k * l + 1);
    wealth.push(1.0);
    let mut turnover_series = Vec::with_capacity(k);
    let mut weights_per_block = Vec::with_capacity(k);
    let mut blocks = Vec::with_capacity(k);
    let mut sum_ret = 0.0;
    let mut sum_sq = 0.0;

    for j in 1..=k {
        let start = plan.n_estim + (j - 1) * l;
        let window = returns.rows(start - plan.n_estim, plan.n_estim).into_owned();
        let s = sample_covariance(&window, plan.divisor).map_err(|e| Error::Block { block: j, source: Box::new(e) })?;
        let lambda = plan.lambda_rule.lambda_for(&s);
        let est = estimator
            .estimate(&s, lambda)
            .and_then(|e| min_variance_weights(&e.precision).map(|w| (e, w)))
            .map_err(|e| Error::Block { block: j, source: Box::new(e) });
        let (est, w) = est?;

        let held = returns.rows(start, l).into_owned();
        let terms: Vec<f64> = drift_terms(&w, &w_prev, &held).collect();
        let to: f64 = terms.iter().sum();
        let tc: f64 = terms.iter().zip(&costs).map(|(t, eta)| eta * t).sum();

        let mut block_ret = 0.0;
        let mut block_sq = 0.0;
        for t in 0..l {
            let rw: f64 = (0..p).map(|i| held[(t, i)] * w[i]).sum();
            block_ret += rw;
            block_sq += rw * rw;
            let w_last = *wealth.last().unwrap_or(&1.0);
            let growth = if t + 1 == l { 1.0 + rw - tc } else { 1.0 + rw };
            wealth.push(w_last * growth);
        }
        sum_ret += block_ret / l as f64;
        sum_sq += block_sq / l as f64;

        log::debug!("block {j}: lambda {lambda:.4e}, turnover {to:.4}");
        blocks.push(BlockRecord {
            block: j,
            lambda,
            iters: est.iters,
            gap: est.gap,
            turnover: to,
            transaction_cost: tc,
            short_side: short_side(&w),
        });
        turnover_series.push(to);
        weights_per_block.push(w.clone());
        w_prev = w;
    }

    let realized_return = sum_ret / k as f64;
    let realized_risk = (sum_sq / k as f64 - realized_return * realized_return).max(0.0).sqrt();
    let short_side_mean = blocks.iter().map(|b| b.short_side).sum::<f64>() / k as f64;
    Ok(BacktestReport {
        realized_return,
        realized_risk,
        sharpe: (realized_return - plan.risk_free) / realized_risk,
        turnover_series,
        wealth_curve: wealth,
        short_side_mean,
        weights_per_block,
        blocks,
    })
}

/// `r_t = p_t / p_{t-1} - 1`, one row shorter than `prices`.
pub fn simple_returns(prices: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (t, p) = prices.shape();
    if t < 2 {
        return Err(Error::InvalidArgument("need at least two price rows".into()));
    }
    for j in 0..p {
        for i in 0..t {
            if !(prices[(i, j)] > 0.0 && prices[(i, j)].is_finite()) {
                return Err(Error::InvalidArgument(format!("price at ({i}, {j}) must be positive and finite")));
            }
        }
    }
    Ok(DMatrix::from_fn(t - 1, p, |i, j| prices[(i + 1, j)] / prices[(i, j)] - 1.0))
}

/// Keeps rows `0, k, 2k, ...`.
pub fn resample_every(data: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    if k == 0 {
        return Err(Error::InvalidArgument("resampling step must be positive".into()));
    }
    let rows: Vec<usize> = (0..data.nrows()).step_by(k).collect();
    Ok(data.select_rows(&rows))
}
