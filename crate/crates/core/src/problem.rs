//! Synthetic sparse precision problems, Gaussian sampling and sample covariance.
//!
//! Random streams: every generator is a ChaCha20 instance seeded with
//! `seed_from_u64(seed)`; the structure draws (which off-diagonals survive)
//! use stream [`STRUCTURE_STREAM`], the off-diagonal values use
//! [`VALUE_STREAM`] and Gaussian samples use [`SAMPLE_STREAM`]. Each stream
//! is consumed in a fixed order (upper triangle row by row, or sample rows in
//! order), so changing one part of the procedure never shifts another.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::{cholesky, extreme_eigenvalues, SymMatrix};

pub const STRUCTURE_STREAM: u64 = 0;
pub const VALUE_STREAM: u64 = 1;
pub const SAMPLE_STREAM: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Ground-truth precision matrix with its covariance.
#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    /// True precision `Ω`, shifted so that `λ_min(Ω) = 1`.
    pub omega: SymMatrix,
    /// `Ω⁻¹`.
    pub sigma: SymMatrix,
    pub p: usize,
    pub target_sparsity_pct: f64,
    pub seed: u64,
}

impl SyntheticProblem {
    /// Fraction of off-diagonal entries of `Ω` that are nonzero.
    pub fn offdiag_nonzero_fraction(&self) -> f64 {
        let p = self.p;
        if p < 2 {
            return 0.0;
        }
        let nnz = (0..p)
            .flat_map(|i| (0..p).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.omega[(i, j)] != 0.0)
            .count();
        nnz as f64 / (p * (p - 1)) as f64
    }
}

/// Random sparse precision matrix: each upper off-diagonal is uniform on
/// `[-1, 1]` and kept with probability `sp_pct / 100`, then a multiple of the
/// identity is added so the smallest eigenvalue equals one.
pub fn generate_synthetic(p: usize, sp_pct: f64, seed: u64) -> Result<SyntheticProblem> {
    if p < 2 {
        return Err(Error::InvalidArgument(format!("p must be at least 2, got {p}")));
    }
    if !(sp_pct > 0.0 && sp_pct <= 100.0) {
        return Err(Error::InvalidArgument(format!("sparsity must lie in (0, 100], got {sp_pct}")));
    }
    let keep = sp_pct / 100.0;
    let mut structure = stream(seed, STRUCTURE_STREAM);
    let mut values = stream(seed, VALUE_STREAM);
    let raw = SymMatrix::from_upper_fn(p, |i, j| {
        if i == j {
            return 0.0;
        }
        let u: f64 = structure.random();
        let v: f64 = values.random_range(-1.0..=1.0);
        if u < keep {
            v
        } else {
            0.0
        }
    });
    let (raw_min, _) = extreme_eigenvalues(&raw);
    let omega = raw.add_identity(1.0 - raw_min);
    let sigma = cholesky(&omega)?.inverse();
    Ok(SyntheticProblem { omega, sigma, p, target_sparsity_pct: sp_pct, seed })
}

/// `n` i.i.d. rows from `N(0, Σ)`, generated as `z Lᵀ` with `Σ = L Lᵀ`.
pub fn sample_gaussian(problem: &SyntheticProblem, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    let p = problem.p;
    let l = cholesky(&problem.sigma)?;
    let mut rng = stream(seed, SAMPLE_STREAM);
    // row-major fill order keeps rows independent of n
    let mut z = DMatrix::<f64>::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = rng.sample(StandardNormal);
        }
    }
    Ok(z * l.lower().transpose())
}

/// Normalization of the centered Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Divisor {
    /// Divide by `n` (maximum likelihood).
    #[default]
    N,
    /// Divide by `n - 1` (unbiased).
    NMinus1,
}

/// Column-centered sample covariance of an `n x p` data matrix.
pub fn sample_covariance(data: &DMatrix<f64>, divisor: Divisor) -> Result<SymMatrix> {
    let (n, p) = data.shape();
    let denom = match divisor {
        Divisor::N if n >= 1 => n as f64,
        Divisor::NMinus1 if n >= 2 => (n - 1) as f64,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "{n} rows are not enough for divisor {divisor:?}"
            )))
        }
    };
    let mut centered = data.clone();
    for j in 0..p {
        let mean = data.column(j).sum() / n as f64;
        centered.column_mut(j).add_scalar_mut(-mean);
    }
    let gram = centered.transpose() * &centered;
    let s = SymMatrix::from_upper_fn(p, |i, j| gram[(i, j)] / denom);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::max_abs;

    #[test]
    fn smallest_eigenvalue_is_one() {
        for (p, sp, seed) in [(5, 15.0, 1), (30, 3.0, 2), (40, 50.0, 3), (12, 100.0, 4)] {
            let prob = generate_synthetic(p, sp, seed).unwrap();
            let (lo, _) = extreme_eigenvalues(&prob.omega);
            assert!((lo - 1.0).abs() <= 1e-8, "p={p}: {lo}");
        }
    }

    #[test]
    fn dense_and_empty_limits() {
        let full = generate_synthetic(10, 100.0, 5).unwrap();
        assert_eq!(full.offdiag_nonzero_fraction(), 1.0);
        let empty = generate_synthetic(10, 1e-9, 5).unwrap();
        assert_eq!(empty.offdiag_nonzero_fraction(), 0.0);
        assert_eq!(empty.omega, SymMatrix::identity(10));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(25, 15.0, 99).unwrap();
        let b = generate_synthetic(25, 15.0, 99).unwrap();
        assert_eq!(a.omega, b.omega);
        let c = generate_synthetic(25, 15.0, 100).unwrap();
        assert_ne!(a.omega, c.omega);
        let da = sample_gaussian(&a, 20, 3).unwrap();
        let db = sample_gaussian(&b, 20, 3).unwrap();
        assert_eq!(da, db);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(generate_synthetic(1, 10.0, 0).is_err());
        assert!(generate_synthetic(5, 0.0, 0).is_err());
        assert!(generate_synthetic(5, 100.5, 0).is_err());
    }

    #[test]
    fn sample_covariance_examples() {
        let data = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        assert_eq!(sample_covariance(&data, Divisor::N).unwrap()[(0, 0)], 1.0);
        assert_eq!(sample_covariance(&data, Divisor::NMinus1).unwrap()[(0, 0)], 2.0);
        let one_row = DMatrix::from_row_slice(1, 1, &[3.0]);
        assert!(sample_covariance(&one_row, Divisor::NMinus1).is_err());
        let data = DMatrix::from_row_slice(3, 2, &[1.0, 4.0, 2.0, 4.0, 6.0, 4.0]);
        let s = sample_covariance(&data, Divisor::N).unwrap();
        assert_eq!(s[(1, 1)], 0.0);
        assert_eq!(s[(0, 1)], 0.0);
    }

    #[test]
    fn single_sample_gives_rank_one_zero_covariance() {
        let prob = generate_synthetic(4, 50.0, 8).unwrap();
        let data = sample_gaussian(&prob, 1, 8).unwrap();
        assert_eq!(data.nrows(), 1);
        let s = sample_covariance(&data, Divisor::N).unwrap();
        assert_eq!(max_abs(&s), 0.0);
    }
}
