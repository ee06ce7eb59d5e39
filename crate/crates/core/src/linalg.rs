//! Dense real matrices and the deterministic norms and decompositions used
//! throughout the crate.
//!
//! Storage is row-major. Decompositions are delegated to `faer`; everything
//! else (norms, Gram products, restrictions) is computed directly on the
//! row-major buffer.

use faer::{Mat, Par, Side};
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for orthonormality and symmetry checks.
pub const ORTHO_TOL: f64 = 1e-8;
/// Relative tolerance for reconstruction checks, scaled by `max(1, ‖A‖_F)`.
pub const RECON_TOL: f64 = 1e-6;

/// Row-major dense real matrix with at least one row and one column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from a row-major buffer, validating shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::BadShape(format!("{rows}x{cols} has an empty dimension")));
        }
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { row: pos / cols, col: pos % cols });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(m * n);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} entries, expected {n}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(m, n, data)
    }

    /// # Panics
    /// If either dimension is zero or `f` produces a non-finite value.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data).expect("from_fn: invalid matrix")
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| 0.0)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows_iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.cols)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| c * x).collect() }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{:?} minus {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{:?} times {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let dst = &mut out[i * n..(i + 1) * n];
            for (l, &a) in self.row(i).iter().enumerate().take(k) {
                if a == 0.0 {
                    continue;
                }
                for (d, &b) in dst.iter_mut().zip(other.row(l)) {
                    *d += a * b;
                }
            }
        }
        Ok(Self { rows: m, cols: n, data: out })
    }

    /// `AᵀA`, accumulated as a sum of row outer products.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut g = vec![0.0; n * n];
        for row in self.rows_iter() {
            add_outer(&mut g, row, 1.0);
        }
        symmetrize_upper(&mut g, n);
        Self { rows: n, cols: n, data: g }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    fn to_faer(&self) -> Mat<f64> {
        sequential_kernels();
        Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }

    fn from_faer(m: faer::MatRef<'_, f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

/// Adds `w · x xᵀ` to the upper triangle of the row-major `n×n` buffer `g`.
/// Call [`symmetrize_upper`] once accumulation is finished.
pub(crate) fn add_outer(g: &mut [f64], x: &[f64], w: f64) {
    let n = x.len();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let wi = w * xi;
        let dst = &mut g[i * n + i..(i + 1) * n];
        for (d, &xj) in dst.iter_mut().zip(&x[i..]) {
            *d += wi * xj;
        }
    }
}

pub(crate) fn symmetrize_upper(g: &mut [f64], n: usize) {
    for i in 0..n {
        for j in 0..i {
            g[i * n + j] = g[j * n + i];
        }
    }
}

/// Thin singular value decomposition `A = U diag(σ) Vᵀ` with `p = min(m, n)`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// `m×p`, orthonormal columns.
    pub left_vectors: DenseMatrix,
    /// Nonincreasing, nonnegative, length `p`.
    pub singular_values: Vec<f64>,
    /// `n×p`, orthonormal columns.
    pub right_vectors: DenseMatrix,
}

impl SvdResult {
    /// `Σ_j σ_j u_j v_jᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let m = self.left_vectors.nrows();
        let n = self.right_vectors.nrows();
        DenseMatrix::from_fn(m, n, |i, j| {
            self.singular_values
                .iter()
                .enumerate()
                .map(|(l, s)| s * self.left_vectors.get(i, l) * self.right_vectors.get(j, l))
                .sum()
        })
    }
}

/// Decompositions run single-threaded so that results do not depend on the
/// thread count; callers parallelize across trials instead.
fn sequential_kernels() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(Par::Seq));
}

/// Thin SVD; singular values nonincreasing.
pub fn svd(a: &DenseMatrix) -> Result<SvdResult> {
    let dec = a.to_faer().thin_svd().map_err(|_| Error::ConvergenceFailure)?;
    let s = dec.S().column_vector();
    Ok(SvdResult {
        left_vectors: DenseMatrix::from_faer(dec.U()),
        singular_values: (0..s.nrows()).map(|i| s[i].max(0.0)).collect(),
        right_vectors: DenseMatrix::from_faer(dec.V()),
    })
}

/// Singular values only, nonincreasing.
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    let vals = a.to_faer().singular_values().map_err(|_| Error::ConvergenceFailure)?;
    Ok(vals.into_iter().map(|s| s.max(0.0)).collect())
}

/// `σ_{j}(A)` with 1-based `j`; zero beyond `min(m, n)`.
pub fn singular_value(a: &DenseMatrix, j: usize) -> Result<f64> {
    assert!(j >= 1, "singular values are 1-indexed");
    Ok(singular_values(a)?.get(j - 1).copied().unwrap_or(0.0))
}

pub fn frobenius_norm(a: &DenseMatrix) -> f64 {
    a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn spectral_norm(a: &DenseMatrix) -> Result<f64> {
    if a.as_slice().iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    Ok(singular_values(a)?[0])
}

/// `‖A‖_F² / ‖A‖₂²`.
pub fn numerical_rank(a: &DenseMatrix) -> Result<f64> {
    let f = frobenius_norm(a);
    if f == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let s = spectral_norm(a)?;
    // r ≥ 1 exactly; rounding can land a hair below for rank-one input.
    Ok(((f * f) / (s * s)).max(1.0))
}

pub fn column_norms(a: &DenseMatrix) -> Vec<f64> {
    let mut sq = vec![0.0; a.ncols()];
    for row in a.rows_iter() {
        for (s, x) in sq.iter_mut().zip(row) {
            *s += x * x;
        }
    }
    sq.into_iter().map(f64::sqrt).collect()
}

pub fn row_norms(a: &DenseMatrix) -> Vec<f64> {
    a.rows_iter().map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt()).collect()
}

/// `‖A‖_Col`: sum of the Euclidean lengths of the columns.
pub fn column_norm_sum(a: &DenseMatrix) -> f64 {
    column_norms(a).iter().sum()
}

/// `‖A‖_(k)`: mean of the `k` largest column lengths, with `k` clamped to `[1, n]`.
pub fn top_k_column_average(a: &DenseMatrix, k: usize) -> f64 {
    let mut norms = column_norms(a);
    let k = k.clamp(1, norms.len());
    norms.sort_unstable_by(|x, y| y.total_cmp(x));
    norms[..k].iter().sum::<f64>() / k as f64
}

/// Integer index for a possibly fractional count such as `n/q`: `⌈x⌉` clamped
/// to `[1, n]`. Values within `1e-12` relative of an integer are snapped to it
/// before rounding up.
pub fn fractional_count(x: f64, n: usize) -> usize {
    if !(x.is_finite()) || x <= 1.0 {
        return if x.is_infinite() && x > 0.0 { n } else { 1 };
    }
    (snap_ceil(x) as usize).clamp(1, n)
}

/// `⌈x⌉`, except that values within `1e-12·|x|` above an integer round down to it.
pub(crate) fn snap_ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-12 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// `D(A)`: the diagonal part of a square matrix.
pub fn diagonal_part(a: &DenseMatrix) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    Ok(DenseMatrix::from_fn(a.nrows(), a.ncols(), |i, j| if i == j { a.get(i, j) } else { 0.0 }))
}

/// Eigenvalues (nonincreasing) and matching eigenvector columns of a symmetric matrix.
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if !a.is_square() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    let n = a.nrows();
    let dec = a.to_faer().self_adjoint_eigen(Side::Lower).map_err(|_| Error::ConvergenceFailure)?;
    // faer orders eigenvalues nondecreasingly.
    let s = dec.S().column_vector();
    let u = dec.U();
    let values = (0..n).rev().map(|i| s[i]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| u[(r, n - 1 - c)]);
    Ok((values, vectors))
}

/// Spectral norm of a symmetric matrix: `max |λ|`.
pub fn symmetric_spectral_norm(a: &DenseMatrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    let vals = a.to_faer().self_adjoint_eigenvalues(Side::Lower).map_err(|_| Error::ConvergenceFailure)?;
    Ok(vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())))
}

/// Largest entry of `|QᵀQ − I|` for a matrix with (supposedly) orthonormal columns.
pub fn orthonormality_defect(q: &DenseMatrix) -> f64 {
    let g = q.gram();
    let k = g.nrows();
    let mut worst = 0.0_f64;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g.get(i, j) - target).abs());
        }
    }
    worst
}

/// `m×k` matrix with orthonormal columns, from the QR factorization of a
/// Gaussian matrix. Requires `k ≤ m`.
pub fn random_orthonormal<R: rand::Rng + ?Sized>(m: usize, k: usize, rng: &mut R) -> Result<DenseMatrix> {
    if k == 0 || k > m {
        return Err(Error::BadShape(format!("need 1 ≤ k ≤ m, got m={m}, k={k}")));
    }
    let g = DenseMatrix::from_fn(m, k, |_, _| rand_distr::StandardNormal.sample(rng));
    Ok(DenseMatrix::from_faer(g.to_faer().qr().compute_thin_Q().as_ref()))
}

/// `U·diag(σ)·Vᵀ` with Haar-like random `U` (`m×p`) and `V` (`n×p`),
/// `p = σ.len() ≤ min(m, n)`.
pub fn matrix_with_singular_values(m: usize, n: usize, sigma: &[f64], seed: u64) -> Result<DenseMatrix> {
    let p = sigma.len();
    if p == 0 || p > m.min(n) {
        return Err(Error::BadShape(format!("{p} singular values for a {m}x{n} matrix")));
    }
    let mut rng = crate::rng::derive_rng(seed, crate::rng::STREAM_WITNESS);
    let u = random_orthonormal(m, p, &mut rng)?;
    let v = random_orthonormal(n, p, &mut rng)?;
    let us = DenseMatrix::from_fn(m, p, |i, j| u.get(i, j) * sigma[j]);
    us.matmul(&v.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(m: usize, n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(matches!(DenseMatrix::new(0, 3, vec![]), Err(Error::BadShape(_))));
        assert!(matches!(DenseMatrix::new(2, 2, vec![1.0; 3]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(
            DenseMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
        assert!(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(frobenius_norm(&DenseMatrix::identity(4)), 2.0);
        assert_eq!(frobenius_norm(&DenseMatrix::from_fn(8, 8, |_, _| 1.0)), 8.0);
    }

    #[test]
    fn spectral_examples() {
        assert!((spectral_norm(&DenseMatrix::identity(7)).unwrap() - 1.0).abs() < 1e-12);
        let u = [1.0, -2.0, 2.0];
        let v = [3.0, 4.0];
        let a = DenseMatrix::from_fn(3, 2, |i, j| u[i] * v[j]);
        assert!((spectral_norm(&a).unwrap() - 15.0).abs() < 1e-12);
        assert_eq!(numerical_rank(&a).unwrap(), 1.0);
        assert_eq!(spectral_norm(&DenseMatrix::zeros(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn numerical_rank_identity_and_zero() {
        assert!((numerical_rank(&DenseMatrix::identity(5)).unwrap() - 5.0).abs() < 1e-12);
        assert!(matches!(numerical_rank(&DenseMatrix::zeros(2, 3)), Err(Error::ZeroMatrix)));
    }

    #[test]
    fn svd_sorts_diagonal() {
        let s = svd(&DenseMatrix::diagonal(&[3.0, 1.0, 2.0])).unwrap();
        for (got, want) in s.singular_values.iter().zip([3.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn svd_contract_on_random_and_wide_input() {
        for (m, n, seed) in [(10, 7, 1), (7, 10, 2), (1, 5, 3), (5, 1, 4), (30, 30, 5)] {
            let a = random(m, n, seed);
            let s = svd(&a).unwrap();
            let p = m.min(n);
            assert_eq!(s.singular_values.len(), p);
            assert_eq!(s.left_vectors.shape(), (m, p));
            assert_eq!(s.right_vectors.shape(), (n, p));
            assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
            assert!(s.singular_values.iter().all(|&x| x >= 0.0));
            assert!(orthonormality_defect(&s.left_vectors) < ORTHO_TOL);
            assert!(orthonormality_defect(&s.right_vectors) < ORTHO_TOL);
            let resid = frobenius_norm(&a.sub(&s.reconstruct()).unwrap());
            assert!(resid <= RECON_TOL * frobenius_norm(&a).max(1.0));
            assert!((spectral_norm(&a).unwrap() - s.singular_values[0]).abs() <= 1e-8 * s.singular_values[0]);
        }
    }

    #[test]
    fn svd_rank_deficient() {
        // two nonzero columns padded with zero columns
        let base = random(6, 2, 9);
        let a = DenseMatrix::from_fn(6, 4, |i, j| if j < 2 { base.get(i, j) } else { 0.0 });
        let s = svd(&a).unwrap();
        assert!(s.singular_values[2] <= 1e-8);
        assert!(s.singular_values[3] <= 1e-8);
    }

    #[test]
    fn column_norm_sum_examples() {
        assert_eq!(column_norm_sum(&DenseMatrix::identity(6)), 6.0);
        let a = DenseMatrix::from_rows(&[[3.0, 0.0], [4.0, 0.0], [0.0, 5.0]]).unwrap();
        assert_eq!(column_norm_sum(&a), 10.0);
        let signs = DenseMatrix::from_fn(9, 9, |i, j| if (i * 7 + j * 3) % 2 == 0 { 1.0 } else { -1.0 });
        assert!((column_norm_sum(&signs) - 27.0).abs() < 1e-12);
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(top_k_column_average(&DenseMatrix::identity(5), 3), 1.0);
        let d = DenseMatrix::diagonal(&[4.0, 2.0, 1.0, 1.0]);
        assert_eq!(top_k_column_average(&d, 2), 3.0);
        let a = random(5, 6, 11);
        assert!((top_k_column_average(&a, 6) - column_norm_sum(&a) / 6.0).abs() < 1e-12);
        assert_eq!(top_k_column_average(&d, 0), 4.0);
        assert_eq!(top_k_column_average(&d, 99), 2.0);
    }

    #[test]
    fn fractional_count_rounds_up_and_clamps() {
        assert_eq!(fractional_count(16.0 / 3.0, 16), 6);
        assert_eq!(fractional_count(4.0, 16), 4);
        assert_eq!(fractional_count(1.0 / 0.1, 64), 10);
        assert_eq!(fractional_count(0.3, 16), 1);
        assert_eq!(fractional_count(100.0, 16), 16);
        assert_eq!(fractional_count(f64::INFINITY, 16), 16);
    }

    #[test]
    fn diagonal_part_examples() {
        assert_eq!(diagonal_part(&DenseMatrix::identity(3)).unwrap(), DenseMatrix::identity(3));
        assert_eq!(
            diagonal_part(&DenseMatrix::from_fn(4, 4, |_, _| 1.0)).unwrap(),
            DenseMatrix::identity(4)
        );
        let upper = DenseMatrix::from_fn(4, 4, |i, j| if j > i { (i + j) as f64 } else { 0.0 });
        assert_eq!(diagonal_part(&upper).unwrap(), DenseMatrix::zeros(4, 4));
        assert!(matches!(diagonal_part(&random(2, 3, 0)), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn gram_matches_matmul() {
        let a = random(9, 4, 3);
        let g = a.gram();
        let direct = a.transpose().matmul(&a).unwrap();
        assert!(g.max_abs_diff(&direct) < 1e-12);
    }

    #[test]
    fn symmetric_eigen_sorted_and_orthonormal() {
        let a = random(8, 5, 4).gram();
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        assert!(orthonormality_defect(&vecs) < ORTHO_TOL);
        let s = singular_values(&random(8, 5, 4)).unwrap();
        for (l, s) in vals.iter().zip(&s) {
            assert!((l - s * s).abs() < 1e-10 * vals[0]);
        }
    }

    #[test]
    fn prescribed_singular_values() {
        let sigma = [5.0, 2.0, 2.0, 0.5];
        let a = matrix_with_singular_values(30, 7, &sigma, 3).unwrap();
        let got = singular_values(&a).unwrap();
        for (g, w) in got.iter().zip(sigma.iter().chain(std::iter::repeat(&0.0))) {
            assert!((g - w).abs() < 1e-10, "{got:?}");
        }
        assert_eq!(a, matrix_with_singular_values(30, 7, &sigma, 3).unwrap());
        assert!(matrix_with_singular_values(3, 2, &[1.0, 1.0, 1.0], 0).is_err());
    }
}
