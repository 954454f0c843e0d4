//! Reference solutions for small problems.
//!
//! [`oracle_solve`] maximizes `log det Y` over `‖Y - S‖_∞ ≤ λ` by plain
//! projected gradient ascent. The step is `min(t_prev, λ_min(Y)²)`, a
//! non-increasing sequence that never compares objective values, halved only
//! if the projected point is not positive definite. There is no primal
//! iterate and the stopping test is computed inline, so the oracle shares
//! nothing with the main solver beyond factorization and projection.

use crate::error::{Error, Result};
use crate::matrix::{cholesky, extreme_eigenvalues, frob_distance, frob_norm, SymMatrix};
use crate::prox::box_project;

/// Largest dimension the oracle accepts.
pub const MAX_DIM: usize = 10;

const MAX_ITERS: usize = 2_000_000;

/// Closed-form solution for `p = 1`: `1 / (s + λ)`.
pub fn scalar_solution(s: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !(s + lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need lambda > 0 and s + lambda > 0, got s = {s}, lambda = {lambda}"
        )));
    }
    Ok(1.0 / (s + lambda))
}

/// Precision estimate `X = Y⁻¹` once `<S, X> + λ‖X‖₁ - p ≤ tol` and the last
/// step moved `Y` by at most `tol · ‖Y‖_F`.
///
/// The first quantity is the duality gap of the pair `(Y⁻¹, Y)`, which
/// certifies the objective value; the second pins down the iterate itself,
/// since a gap of `ε` alone only bounds the distance to the optimum by `O(√ε)`.
pub fn oracle_solve(s: &SymMatrix, lambda: f64, tol: f64) -> Result<SymMatrix> {
    let p = s.dim();
    if p == 0 || p > MAX_DIM {
        return Err(Error::InvalidArgument(format!("oracle handles 1 <= p <= {MAX_DIM}, got {p}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) || !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("need lambda > 0 and tol > 0, got {lambda}, {tol}")));
    }
    let lower = s.map(|v| v - lambda);
    let upper = s.map(|v| v + lambda);

    let mut y = s.add_identity(lambda);
    let mut f = cholesky(&y).map_err(|_| Error::InitialPointNotPd)?;
    let mut step = f64::INFINITY;
    let mut moved = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        let x = f.inverse();
        let mut gap = -(p as f64);
        for j in 0..p {
            for i in 0..p {
                gap += s[(i, j)] * x[(i, j)] + lambda * x[(i, j)].abs();
            }
        }
        if gap <= tol && moved <= tol * frob_norm(&y) {
            return Ok(x);
        }

        let (lo, _) = extreme_eigenvalues(&y);
        step = step.min(lo * lo);
        loop {
            let trial = box_project(&y.add(&x.scale(step)), &lower, &upper)?;
            if let Ok(ft) = cholesky(&trial) {
                moved = frob_distance(&trial, &y);
                y = trial;
                f = ft;
                break;
            }
            step *= 0.5;
            if step < 1e-30 {
                return Err(Error::NonConvergence(format!("oracle step collapsed, gap {gap:e}")));
            }
        }
    }
    Err(Error::NonConvergence(format!("oracle exceeded {MAX_ITERS} iterations")))
}
