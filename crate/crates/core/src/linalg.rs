//! Small dense and sparse kernels: compressed-row matrices, dense LU with
//! partial pivoting, vector helpers and a Lanczos extreme-eigenvalue
//! estimator.

use std::ops::{Index, IndexMut};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `y += a * x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            cols[next[i]] = j;
            vals[next[i]] = v;
            next[i] += 1;
        }

        let mut row_offsets = Vec::with_capacity(nrows + 1);
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_offsets.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..nrows {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            // stable sort keeps the summation order of duplicates fixed
            scratch.sort_by_key(|&(c, _)| c);
            for &(c, v) in &scratch {
                if col_indices.len() > row_offsets[i] && *col_indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self { nrows, ncols, row_offsets, col_indices, values }
    }

    pub fn from_dense(a: &DenseMatrix) -> Self {
        let mut triplets = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    triplets.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), &triplets)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[range.clone()], &self.values[range])
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> (&[usize], &mut [f64]) {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[range.clone()], &mut self.values[range])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn spmv(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y);
        y
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, v)| v * x[j]).sum();
        }
    }

    /// `b - A x`
    pub fn residual(&self, b: &[f64], x: &[f64]) -> Vec<f64> {
        let mut r = self.spmv(x);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        r
    }

    pub fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                triplets.push((j, i, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, &triplets)
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &CsrMatrix) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut triplets = Vec::new();
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&k, &a) in cols.iter().zip(vals) {
                let (ocols, ovals) = other.row(k);
                for (&j, &b) in ocols.iter().zip(ovals) {
                    triplets.push((i, j, a * b));
                }
            }
        }
        Self::from_triplets(self.nrows, other.ncols, &triplets)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                a[(i, j)] += v;
            }
        }
        a
    }

    /// Dense submatrix on the given row and column index lists.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(rows.len(), cols.len());
        for (li, &i) in rows.iter().enumerate() {
            for (lj, &j) in cols.iter().enumerate() {
                a[(li, lj)] = self.get(i, j);
            }
        }
        a
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / scale
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, data: vec![0.0; nrows * ncols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut a = Self::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = 1.0;
        }
        a
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            assert_eq!(r.len(), ncols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { nrows, ncols, data }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            axpy(xi, self.row(i), &mut y);
        }
        y
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut c = DenseMatrix::zeros(self.nrows, other.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.ncols {
                    c.data[i * other.ncols + j] += a * other[(k, j)];
                }
            }
        }
        c
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        norm_inf(&self.data)
    }

    pub fn lu(&self) -> Result<LuFactors> {
        LuFactors::factor(self)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.ncols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.ncols + j]
    }
}

/// `P A = L U` with unit lower `L`, both packed into one matrix.
#[derive(Clone, Debug)]
pub struct LuFactors {
    lu: DenseMatrix,
    pivots: Vec<usize>,
}

impl LuFactors {
    /// Pivots smaller than `1e-14 * ||A||_inf` are reported as singular.
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::InvalidArgument(format!(
                "LU of a non-square {}x{} matrix",
                a.nrows, a.ncols
            )));
        }
        let n = a.nrows;
        let tol = 1e-14 * a.norm_inf();
        let mut lu = a.clone();
        let mut pivots = (0..n).collect::<Vec<_>>();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= tol || pmax == 0.0 {
                return Err(Error::SingularMatrix { column: k, pivot: pmax });
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                pivots.swap(k, p);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let l = lu[(i, k)] / pivot;
                lu[(i, k)] = l;
                if l != 0.0 {
                    for j in k + 1..n {
                        lu.data[i * n + j] -= l * lu.data[k * n + j];
                    }
                }
            }
        }
        Ok(Self { lu, pivots })
    }

    pub fn dim(&self) -> usize {
        self.lu.nrows
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.pivots.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s: f64 = row[..i].iter().zip(&x[..i]).map(|(l, xj)| l * xj).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s: f64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(u, xj)| u * xj).sum();
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    pub fn inverse(&self) -> DenseMatrix {
        let n = self.dim();
        let mut inv = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve(&e);
            e[j] = 0.0;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// Extreme Ritz values from a Lanczos run.
#[derive(Clone, Copy, Debug)]
pub struct LanczosEstimate {
    pub min: f64,
    pub max: f64,
    pub iterations: usize,
    /// The Krylov space became invariant before `iters` steps.
    pub breakdown: bool,
}

/// Lanczos on an operator self-adjoint in the Euclidean inner product,
/// started from a fixed pseudo-random vector.
pub fn lanczos_extremes<F>(apply: F, dim: usize, iters: usize) -> LanczosEstimate
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let start = seeded_vector(dim, 0x1a2b3c);
    lanczos_extremes_with(apply, dot, &start, iters)
}

/// Lanczos with full reorthogonalization in a caller-supplied inner product.
///
/// For a preconditioned operator `T = D^{-1} A` with symmetric `D^{-1}` and
/// SPD `A`, pass the `A`-inner product: `T` is self-adjoint there.
pub fn lanczos_extremes_with<F, G>(mut apply: F, inner: G, start: &[f64], iters: usize) -> LanczosEstimate
where
    F: FnMut(&[f64]) -> Vec<f64>,
    G: Fn(&[f64], &[f64]) -> f64,
{
    let iters = iters.max(1);
    let n0 = inner(start, start).sqrt();
    if n0 == 0.0 || start.is_empty() {
        return LanczosEstimate { min: 0.0, max: 0.0, iterations: 0, breakdown: true };
    }
    let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|v| v / n0).collect()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut breakdown = false;
    for j in 0..iters {
        let mut w = apply(&basis[j]);
        let a = inner(&w, &basis[j]);
        alpha.push(a);
        if j + 1 == iters || j + 1 == start.len() {
            breakdown = j + 1 == start.len() && j + 1 < iters;
            break;
        }
        axpy(-a, &basis[j], &mut w);
        if j > 0 {
            axpy(-beta[j - 1], &basis[j - 1], &mut w);
        }
        for v in &basis {
            let c = inner(&w, v);
            axpy(-c, v, &mut w);
        }
        let b = inner(&w, &w).max(0.0).sqrt();
        let scale = a.abs() + beta.last().copied().unwrap_or(0.0);
        if b <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            breakdown = true;
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|v| v / b).collect());
    }
    let eig = tridiagonal_eigenvalues(&alpha, &beta[..alpha.len() - 1]);
    LanczosEstimate {
        min: eig[0],
        max: *eig.last().unwrap(),
        iterations: alpha.len(),
        breakdown,
    }
}

/// All eigenvalues (ascending) of the symmetric tridiagonal matrix with
/// diagonal `alpha` and off-diagonal `beta`, by Sturm-sequence bisection.
pub fn tridiagonal_eigenvalues(alpha: &[f64], beta: &[f64]) -> Vec<f64> {
    let n = alpha.len();
    assert_eq!(beta.len() + 1, n.max(1));
    if n == 0 {
        return Vec::new();
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 } + if i + 1 < n { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    // number of eigenvalues strictly below x
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..n {
            let b2 = if i > 0 { beta[i - 1] * beta[i - 1] } else { 0.0 };
            d = alpha[i] - x - if i > 0 { b2 / d } else { 0.0 };
            if d == 0.0 {
                d = -f64::EPSILON * (x.abs() + 1.0);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    (0..n)
        .map(|k| {
            let (mut a, mut b) = (lo - 1e-12 * span, hi + 1e-12 * span);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if count_below(mid) > k {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

/// Deterministic pseudo-random vector with entries in `[-1, 1)`.
pub fn seeded_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spmv_small() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (1, 1, 3.0)]);
        assert_eq!(a.spmv(&[1.0, 1.0]), vec![2.0, 3.0]);
        let i = CsrMatrix::identity(3);
        assert_eq!(i.spmv(&[1.0, -2.0, 4.0]), vec![1.0, -2.0, 4.0]);
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 0, 1.0), (0, 2, 2.5), (1, 1, -1.0)]);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 2), 3.5);
        assert_eq!(a.row(0).0, &[0, 2]);
    }

    #[test]
    fn spmv_matches_dense_product() {
        let mut rng = StdRng::seed_from_u64(7);
        let mut trip = Vec::new();
        for _ in 0..60 {
            trip.push((rng.gen_range(0..9), rng.gen_range(0..7), rng.gen_range(-1.0..1.0)));
        }
        let a = CsrMatrix::from_triplets(9, 7, &trip);
        let x = seeded_vector(7, 3);
        let y = a.spmv(&x);
        let yd = a.to_dense().matvec(&x);
        for (u, v) in y.iter().zip(&yd) {
            assert!((u - v).abs() < 1e-14);
        }
        let at = a.transpose();
        assert_eq!(at.to_dense(), a.to_dense().transpose());
    }

    #[test]
    fn lu_needs_pivoting() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let x = a.lu().unwrap().solve(&[1.0, 2.0]);
        assert_eq!(x, vec![2.0, 1.0]);
        let id = DenseMatrix::identity(4);
        assert_eq!(id.lu().unwrap().solve(&[1.0, 2.0, 3.0, 4.0]), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn lu_hilbert_against_exact_inverse() {
        // exact inverse of the 4x4 Hilbert matrix (integer entries)
        let exact = [
            [16.0, -120.0, 240.0, -140.0],
            [-120.0, 1200.0, -2700.0, 1680.0],
            [240.0, -2700.0, 6480.0, -4200.0],
            [-140.0, 1680.0, -4200.0, 2800.0],
        ];
        let h = DenseMatrix::from_rows(
            &(0..4).map(|i| (0..4).map(|j| 1.0 / (i + j + 1) as f64).collect()).collect::<Vec<_>>(),
        );
        let inv = h.lu().unwrap().inverse();
        for i in 0..4 {
            for j in 0..4 {
                assert!((inv[(i, j)] - exact[i][j]).abs() <= 1e-9 * exact[i][j].abs());
            }
        }
    }

    #[test]
    fn lu_reports_singular() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(a.lu(), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn lu_reconstructs_integer_system_exactly() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 4.0]]);
        let x = vec![1.0, -2.0, 3.0];
        let b = a.matvec(&x);
        let y = a.lu().unwrap().solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn lanczos_diagonal_spectrum() {
        let d: Vec<f64> = (1..=5).map(|v| v as f64).collect();
        let est = lanczos_extremes(|x| x.iter().zip(&d).map(|(a, b)| a * b).collect(), 5, 20);
        assert!((est.min - 1.0).abs() < 1e-6, "{est:?}");
        assert!((est.max - 5.0).abs() < 1e-6, "{est:?}");
    }

    #[test]
    fn lanczos_identity_and_scalar() {
        let est = lanczos_extremes(|x| x.to_vec(), 10, 5);
        assert!((est.min - 1.0).abs() < 1e-14 && (est.max - 1.0).abs() < 1e-14);
        assert!(est.breakdown);
        let est = lanczos_extremes(|x| vec![3.5 * x[0]], 1, 4);
        assert!((est.min - 3.5).abs() < 1e-14 && (est.max - 3.5).abs() < 1e-14);
    }

    #[test]
    fn lanczos_max_is_monotone_in_iterations() {
        let n = 40;
        let d: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).powi(2) / 10.0).collect();
        let mut prev = f64::NEG_INFINITY;
        for iters in 2..12 {
            let est = lanczos_extremes(|x| x.iter().zip(&d).map(|(a, b)| a * b).collect(), n, iters);
            assert!(est.max >= prev - 1e-12);
            assert!(est.max <= d[n - 1] + 1e-8 && est.min >= d[0] - 1e-8);
            prev = est.max;
        }
    }

    #[test]
    fn tridiagonal_known() {
        // [[2,1],[1,2]] -> 1, 3
        let e = tridiagonal_eigenvalues(&[2.0, 2.0], &[1.0]);
        assert!((e[0] - 1.0).abs() < 1e-12 && (e[1] - 3.0).abs() < 1e-12);
    }
}
