//! Elementwise proximal operators: soft-threshold, clip and box projection.

use crate::error::{Error, Result};
use crate::matrix::SymMatrix;

#[inline]
pub(crate) fn soft_scalar(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn clip_scalar(x: f64, t: f64) -> f64 {
    x.max(-t).min(t)
}

fn check_threshold(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be finite and non-negative, got {t}"
        )));
    }
    Ok(())
}

/// Entrywise `sign(x) · max(|x| - t, 0)`.
pub fn soft_threshold(m: &SymMatrix, t: f64) -> Result<SymMatrix> {
    check_threshold(t)?;
    Ok(m.map(|x| soft_scalar(x, t)))
}

/// Entrywise `min(max(x, -t), t)`.
pub fn clip(m: &SymMatrix, t: f64) -> Result<SymMatrix> {
    check_threshold(t)?;
    Ok(m.map(|x| clip_scalar(x, t)))
}

/// Soft-threshold with a separate non-negative threshold per entry.
pub fn soft_threshold_weighted(m: &SymMatrix, thresholds: &SymMatrix) -> Result<SymMatrix> {
    if m.dim() != thresholds.dim() {
        return Err(Error::dims(m.dim(), thresholds.dim()));
    }
    if let Some(t) = thresholds.as_matrix().iter().find(|t| **t < 0.0) {
        return Err(Error::InvalidArgument(format!("negative threshold {t}")));
    }
    Ok(m.zip_map(thresholds, soft_scalar))
}

/// Checks that `lower <= upper` entrywise and that the dimensions agree with `p`.
pub fn validate_box(lower: &SymMatrix, upper: &SymMatrix, p: usize) -> Result<()> {
    if lower.dim() != p || upper.dim() != p {
        return Err(Error::dims(p, format!("{} / {}", lower.dim(), upper.dim())));
    }
    for j in 0..p {
        for i in 0..p {
            if lower[(i, j)] > upper[(i, j)] {
                return Err(Error::InvalidArgument(format!(
                    "empty interval at ({i}, {j}): lower {} > upper {}",
                    lower[(i, j)],
                    upper[(i, j)]
                )));
            }
        }
    }
    Ok(())
}

/// Entrywise projection onto `[lower_ij, upper_ij]`.
pub fn box_project(m: &SymMatrix, lower: &SymMatrix, upper: &SymMatrix) -> Result<SymMatrix> {
    validate_box(lower, upper, m.dim())?;
    Ok(box_project_unchecked(m, lower, upper))
}

pub(crate) fn box_project_unchecked(m: &SymMatrix, lower: &SymMatrix, upper: &SymMatrix) -> SymMatrix {
    let p = m.dim();
    SymMatrix::from_upper_fn(p, |i, j| m[(i, j)].max(lower[(i, j)]).min(upper[(i, j)]))
}
