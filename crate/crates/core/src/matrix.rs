//! Dense symmetric matrices and the factorization kernels the solvers run on.
//!
//! Every matrix in the estimation problems (sample covariance, dual iterate,
//! precision estimate, bounds) is a [`SymMatrix`]: a full `p x p` buffer with
//! both triangles stored and kept exactly equal. Positive definiteness is
//! decided by a Cholesky pivot test, which is what the line search uses to
//! reject infeasible steps.

use std::ops::Index;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense symmetric matrix with both triangles stored.
///
/// Entries are finite and `m[(i, j)] == m[(j, i)]` holds bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps a square matrix, rejecting any asymmetry or non-finite entry.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::dims("square matrix", format!("{}x{}", m.nrows(), m.ncols())));
        }
        check_finite(&m)?;
        let p = m.nrows();
        for j in 0..p {
            for i in (j + 1)..p {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::NotSymmetric {
                        row: i,
                        col: j,
                        gap: (m[(i, j)] - m[(j, i)]).abs(),
                    });
                }
            }
        }
        Ok(SymMatrix(m))
    }

    /// Builds `(m + mᵀ) / 2`.
    pub fn from_symmetrized(mut m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::dims("square matrix", format!("{}x{}", m.nrows(), m.ncols())));
        }
        check_finite(&m)?;
        symmetrize_in_place(&mut m);
        Ok(SymMatrix(m))
    }

    /// Builds a matrix from row slices; rows must form an exactly symmetric square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::dims(format!("{p} columns"), format!("{} columns", bad.len())));
        }
        SymMatrix::new(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
    }

    /// Builds a matrix by evaluating `f(i, j)` on the upper triangle and mirroring.
    pub fn from_upper_fn(p: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(p, p);
        for j in 0..p {
            for i in 0..=j {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    pub fn identity(p: usize) -> Self {
        SymMatrix(DMatrix::identity(p, p))
    }

    pub fn zeros(p: usize) -> Self {
        SymMatrix(DMatrix::zeros(p, p))
    }

    /// Constant matrix with every entry equal to `value`.
    pub fn filled(p: usize, value: f64) -> Self {
        SymMatrix(DMatrix::from_element(p, p, value))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let p = diag.len();
        let mut m = DMatrix::zeros(p, p);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        SymMatrix(m)
    }

    /// Matrix dimension `p`.
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)]).collect()
    }

    /// Same diagonal, zero off-diagonals.
    pub fn diagonal_part(&self) -> SymMatrix {
        SymMatrix::from_diagonal(&self.diagonal())
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)]).sum()
    }

    /// Elementwise map. Mirrored entries go through the same `f` so symmetry is kept.
    pub fn map(&self, f: impl FnMut(f64) -> f64) -> SymMatrix {
        SymMatrix(self.0.map(f))
    }

    /// Elementwise combination of two matrices of equal dimension.
    ///
    /// Panics if the dimensions differ.
    pub fn zip_map(&self, other: &SymMatrix, f: impl FnMut(f64, f64) -> f64) -> SymMatrix {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch in zip_map");
        SymMatrix(self.0.zip_map(&other.0, f))
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        self.map(|a| c * a)
    }

    /// `self + c·I`.
    pub fn add_identity(&self, c: f64) -> SymMatrix {
        let mut m = self.0.clone();
        for i in 0..self.dim() {
            m[(i, i)] += c;
        }
        SymMatrix(m)
    }

    /// Sum of absolute values of all entries.
    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    /// Largest absolute off-diagonal entry (0 for `p = 1`).
    pub fn max_abs_off_diagonal(&self) -> f64 {
        let p = self.dim();
        let mut best = 0.0_f64;
        for j in 0..p {
            for i in 0..p {
                if i != j {
                    best = best.max(self.0[(i, j)].abs());
                }
            }
        }
        best
    }

    /// Number of entries with magnitude above `zero_tol`.
    pub fn count_nonzero(&self, zero_tol: f64) -> usize {
        self.0.iter().filter(|v| v.abs() > zero_tol).count()
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let p = self.dim();
        assert_eq!(v.len(), p, "dimension mismatch in mul_vec");
        (0..p)
            .map(|i| (0..p).map(|j| self.0[(i, j)] * v[j]).sum())
            .collect()
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Replaces `m` by `(m + mᵀ) / 2`; the result is exactly symmetric.
pub(crate) fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for j in 0..p {
        for i in (j + 1)..p {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = M`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: DMatrix<f64>,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// `log det M = 2 Σ log L_ii`.
    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<f64>()
    }

    /// `M⁻¹ = L⁻ᵀ L⁻¹`, symmetrized.
    pub fn inverse(&self) -> SymMatrix {
        let p = self.dim();
        let l = self.lower.as_slice();
        let mut linv = DMatrix::<f64>::zeros(p, p);
        {
            let data = linv.as_mut_slice();
            for j in 0..p {
                let col = &mut data[j * p..(j + 1) * p];
                col[j] = 1.0;
                for k in j..p {
                    let lk = &l[k * p..(k + 1) * p];
                    let xk = col[k] / lk[k];
                    col[k] = xk;
                    if xk != 0.0 {
                        for i in (k + 1)..p {
                            col[i] -= lk[i] * xk;
                        }
                    }
                }
            }
        }
        let mut inv = linv.transpose() * &linv;
        symmetrize_in_place(&mut inv);
        SymMatrix(inv)
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }
}

/// Cholesky factorization; fails on the first non-positive (or NaN) pivot.
pub fn cholesky(m: &SymMatrix) -> Result<CholeskyFactor> {
    let p = m.dim();
    let mut a = m.0.clone();
    {
        let data = a.as_mut_slice();
        for j in 0..p {
            let pivot = data[j * p + j];
            if !(pivot > 0.0 && pivot.is_finite()) {
                return Err(Error::NotPositiveDefinite { index: j, pivot });
            }
            let d = pivot.sqrt();
            data[j * p + j] = d;
            for v in &mut data[j * p + j + 1..(j + 1) * p] {
                *v /= d;
            }
            let (head, tail) = data.split_at_mut((j + 1) * p);
            let col_j = &head[j * p..];
            for k in (j + 1)..p {
                let lkj = col_j[k];
                if lkj == 0.0 {
                    continue;
                }
                let col_k = &mut tail[(k - j - 1) * p..(k - j) * p];
                for i in k..p {
                    col_k[i] -= col_j[i] * lkj;
                }
            }
        }
        for j in 1..p {
            for i in 0..j {
                data[j * p + i] = 0.0;
            }
        }
    }
    Ok(CholeskyFactor { lower: a })
}

/// `log det` from a factor.
pub fn logdet(factor: &CholeskyFactor) -> f64 {
    factor.logdet()
}

/// Inverse from a factor.
pub fn inverse(factor: &CholeskyFactor) -> SymMatrix {
    factor.inverse()
}

/// All eigenvalues in ascending order.
pub fn eigenvalues(m: &SymMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = m.0.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// `(λ_min, λ_max)`.
pub fn extreme_eigenvalues(m: &SymMatrix) -> (f64, f64) {
    let ev = m.0.clone().symmetric_eigenvalues();
    let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

pub fn frob_norm(m: &SymMatrix) -> f64 {
    m.0.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn max_abs(m: &SymMatrix) -> f64 {
    m.0.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Trace inner product `Σ_ij a_ij b_ij`.
pub fn inner(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::dims(a.dim(), b.dim()));
    }
    Ok(dense_inner(&a.0, &b.0))
}

pub(crate) fn dense_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `‖a - b‖_F` without materializing the difference.
pub fn frob_distance(a: &SymMatrix, b: &SymMatrix) -> f64 {
    assert_eq!(a.dim(), b.dim(), "dimension mismatch in frob_distance");
    a.0.iter()
        .zip(b.0.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m2(a: f64, b: f64, c: f64) -> SymMatrix {
        SymMatrix::from_rows(&[vec![a, b], vec![b, c]]).unwrap()
    }

    fn random_pd(p: usize, seed: u64) -> SymMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        let mut m = &g * g.transpose();
        for i in 0..p {
            m[(i, i)] += 0.5;
        }
        SymMatrix::from_symmetrized(m).unwrap()
    }

    #[test]
    fn construction_rejects_asymmetry_and_nan() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.5, 1.0]);
        assert!(matches!(SymMatrix::new(m), Err(Error::NotSymmetric { .. })));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 1.0]);
        assert!(matches!(SymMatrix::new(m), Err(Error::NonFinite { .. })));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 1.0]);
        assert_eq!(SymMatrix::from_symmetrized(m).unwrap()[(0, 1)], 3.0);
    }

    #[test]
    fn cholesky_identity_and_diagonal() {
        let f = cholesky(&SymMatrix::identity(3)).unwrap();
        assert_eq!(f.lower(), &DMatrix::<f64>::identity(3, 3));
        let f = cholesky(&SymMatrix::from_diagonal(&[4.0, 9.0])).unwrap();
        assert_eq!(f.lower(), &DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
    }

    #[test]
    fn cholesky_detects_indefinite() {
        // eigenvalues 3 and -1
        assert!(matches!(
            cholesky(&m2(1.0, 2.0, 1.0)),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(cholesky(&SymMatrix::zeros(2)).is_err());
    }

    #[test]
    fn logdet_examples() {
        assert_eq!(cholesky(&SymMatrix::identity(5)).unwrap().logdet(), 0.0);
        let e = std::f64::consts::E;
        assert_relative_eq!(
            cholesky(&SymMatrix::from_diagonal(&[e, e])).unwrap().logdet(),
            2.0,
            epsilon = 1e-15
        );
        // det [[2,1],[1,2]] = 2*2 - 1*1
        assert_relative_eq!(
            cholesky(&m2(2.0, 1.0, 2.0)).unwrap().logdet(),
            3.0_f64.ln(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(cholesky(&SymMatrix::identity(3)).unwrap().inverse(), SymMatrix::identity(3));
        let inv = cholesky(&SymMatrix::from_diagonal(&[2.0, 4.0])).unwrap().inverse();
        assert!(max_abs(&inv.sub(&SymMatrix::from_diagonal(&[0.5, 0.25]))) <= 1e-15);
        // adjugate: [[a,b],[b,c]]⁻¹ = [[c,-b],[-b,a]] / (ac - b²)
        let (a, b, c) = (1.1, 0.2, 1.1);
        let det = a * c - b * b;
        let inv = cholesky(&m2(a, b, c)).unwrap().inverse();
        assert_relative_eq!(inv[(0, 0)], c / det, epsilon = 1e-14);
        assert_relative_eq!(inv[(0, 1)], -b / det, epsilon = 1e-14);
        assert_relative_eq!(inv[(1, 1)], a / det, epsilon = 1e-14);
        assert_relative_eq!(det, 1.17, epsilon = 1e-14);
    }

    #[test]
    fn eigenvalue_examples() {
        assert_eq!(extreme_eigenvalues(&SymMatrix::identity(4)), (1.0, 1.0));
        assert_eq!(extreme_eigenvalues(&SymMatrix::from_diagonal(&[1.0, 5.0, 3.0])), (1.0, 5.0));
        // roots of t² - 4t + 3
        let (lo, hi) = extreme_eigenvalues(&m2(2.0, 1.0, 2.0));
        assert_relative_eq!(lo, 1.0, max_relative = 1e-12);
        assert_relative_eq!(hi, 3.0, max_relative = 1e-12);
    }

    #[test]
    fn norm_examples() {
        assert_eq!(frob_norm(&SymMatrix::identity(4)), 2.0);
        assert_eq!(max_abs(&m2(0.0, -3.0, 1.0)), 3.0);
        let ip = inner(&SymMatrix::identity(3), &SymMatrix::from_diagonal(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(ip, 6.0);
        assert!(matches!(
            inner(&SymMatrix::identity(3), &SymMatrix::identity(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn factor_reconstructs_source() {
        for seed in 0..5 {
            let m = random_pd(30, seed);
            let f = cholesky(&m).unwrap();
            let err = (f.reconstruct() - m.as_matrix()).norm();
            assert!(err <= 1e-12 * frob_norm(&m), "seed {seed}: {err}");
        }
    }

    #[test]
    fn inverse_round_trip() {
        for (seed, p) in [(1_u64, 1_usize), (2, 7), (3, 20), (4, 50)] {
            let m = random_pd(p, seed);
            let inv = cholesky(&m).unwrap().inverse();
            let prod = inv.as_matrix() * m.as_matrix();
            let dev = (prod - DMatrix::<f64>::identity(p, p)).amax();
            assert!(dev < 1e-9, "p={p}: {dev}");
            assert!(SymMatrix::new(inv.into_inner()).is_ok());
        }
    }

    #[test]
    fn logdet_matches_spectrum() {
        for (seed, p) in [(10_u64, 2_usize), (11, 8), (12, 20)] {
            let m = random_pd(p, seed);
            let from_eigs: f64 = eigenvalues(&m).iter().map(|v| v.ln()).sum();
            let ld = cholesky(&m).unwrap().logdet();
            assert_relative_eq!(ld, from_eigs, max_relative = 1e-8, epsilon = 1e-10);
        }
    }

    proptest! {
        #[test]
        fn weyl_lower_bound(seed in 0u64..10_000, p in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = SymMatrix::from_upper_fn(p, |_, _| rng.random_range(-2.0..2.0));
            let b = SymMatrix::from_upper_fn(p, |_, _| rng.random_range(-2.0..2.0));
            let (amin, _) = extreme_eigenvalues(&a);
            let (bmin, _) = extreme_eigenvalues(&b);
            let (sum_min, _) = extreme_eigenvalues(&a.add(&b));
            prop_assert!(sum_min >= amin + bmin - 1e-10);
        }
    }
}
