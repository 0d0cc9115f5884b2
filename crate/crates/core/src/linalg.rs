//! Small linear-algebra kernels shared by the FEM and peridynamic solvers:
//! a CSR matrix with deterministic parallel products, a banded Cholesky
//! factorization for static solves and power iterations for spectral bounds.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::{Error, Result};

const PARALLEL_ROWS: usize = 8192;

/// Compressed sparse row matrix with a fixed sparsity pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the given per-row column sets. Columns are sorted and
    /// deduplicated.
    pub fn with_pattern(nrows: usize, ncols: usize, mut rows: Vec<Vec<usize>>) -> Self {
        assert_eq!(rows.len(), nrows);
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for cols in rows.iter_mut() {
            cols.sort_unstable();
            cols.dedup();
            debug_assert!(cols.last().map_or(true, |&c| c < ncols));
            col_idx.extend_from_slice(cols);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates
    /// in input order.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); nrows];
        for &(r, c, _) in triplets {
            rows[r].push(c);
        }
        let mut m = Self::with_pattern(nrows, ncols, rows);
        for &(r, c, v) in triplets {
            m.add(r, c, v);
        }
        m
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

    fn position(&self, r: usize, c: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[lo..hi].binary_search(&c).ok().map(|k| lo + k)
    }

    /// Adds `v` to entry `(r, c)`, which must be in the pattern.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let k = self
            .position(r, c)
            .unwrap_or_else(|| panic!("entry ({r}, {c}) is not in the sparsity pattern"));
        self.values[k] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.position(r, c).map_or(0.0, |k| self.values[k])
    }

    /// Iterates `(col, value)` over the stored entries of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|A_ij - A_ji|` over stored entries.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// `y = A x`. Each row is reduced sequentially, so the result does not
    /// depend on the thread count.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        let row = |(r, out): (usize, &mut f64)| {
            let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        };
        if self.nrows >= PARALLEL_ROWS {
            y.par_iter_mut().enumerate().for_each(row);
        } else {
            y.iter_mut().enumerate().for_each(row);
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// Half-bandwidth of the submatrix selected by `map` (old index to new
    /// index, `None` for dropped rows and columns).
    fn bandwidth(&self, map: &[Option<usize>]) -> usize {
        let mut bw = 0;
        for r in 0..self.nrows {
            let Some(i) = map[r] else { continue };
            for (c, _) in self.row(r) {
                if let Some(j) = map[c] {
                    bw = bw.max(i.abs_diff(j));
                }
            }
        }
        bw
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }
}

/// Cholesky factor of a symmetric positive definite band matrix, stored as
/// `n` rows of `bw + 1` lower-band entries.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandedCholesky {
    /// Factors the principal submatrix of `a` on the indices `keep`.
    pub fn factor_submatrix(a: &CsrMatrix, keep: &[usize]) -> Result<Self> {
        let mut map = vec![None; a.nrows()];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = Some(new);
        }
        let n = keep.len();
        let bw = a.bandwidth(&map);
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        for (i, &old) in keep.iter().enumerate() {
            for (c, v) in a.row(old) {
                if let Some(j) = map[c] {
                    if j <= i {
                        band[i * w + (bw - (i - j))] += v;
                    }
                }
            }
        }
        // band[i * w + bw - k] holds L[i][i - k]
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = band[i * w + bw - (i - j)];
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= band[i * w + bw - (i - k)] * band[j * w + bw - (j - k)];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::Numerical(format!(
                            "matrix is not positive definite (pivot {i} = {s:e})"
                        )));
                    }
                    band[i * w + bw] = s.sqrt();
                } else {
                    band[i * w + bw - (i - j)] = s / band[j * w + bw];
                }
            }
        }
        Ok(BandedCholesky { n, bw, band })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        assert_eq!(x.len(), n);
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.band[i * w + bw - (i - k)] * x[k];
            }
            x[i] = s / self.band[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n.min(i + bw + 1) {
                s -= self.band[k * w + bw - (k - i)] * x[k];
            }
            x[i] = s / self.band[i * w + bw];
        }
    }
}

/// Dense Cholesky factorization reporting the first failing pivot.
pub fn dense_cholesky(a: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, usize> {
    let n = a.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(j);
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L L^T x = b` in place for a lower-triangular `L`.
pub fn cholesky_solve_in_place(l: &DMatrix<f64>, x: &mut [f64]) {
    let n = l.nrows();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Outcome of a power iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimate {
    pub eigenvalue: f64,
    pub iterations: usize,
}

/// Largest eigenvalue of a symmetric positive semi-definite operator by power
/// iteration with a Rayleigh-quotient stopping rule.
pub fn power_iteration<F>(mut apply: F, start: Vec<f64>, rel_tol: f64, max_iter: usize) -> Result<PowerEstimate>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut x = start;
    if normalize(&mut x) == 0.0 {
        return Err(Error::Numerical("power iteration started from a zero vector".into()));
    }
    let mut y = vec![0.0; x.len()];
    let mut previous = f64::NAN;
    for it in 1..=max_iter {
        apply(&x, &mut y);
        let rq = dot(&x, &y);
        std::mem::swap(&mut x, &mut y);
        if normalize(&mut x) == 0.0 {
            return Ok(PowerEstimate {
                eigenvalue: 0.0,
                iterations: it,
            });
        }
        if (rq - previous).abs() <= rel_tol * rq.abs() {
            return Ok(PowerEstimate {
                eigenvalue: rq,
                iterations: it,
            });
        }
        previous = rq;
    }
    Err(Error::Numerical(format!(
        "power iteration did not converge in {max_iter} iterations"
    )))
}

/// Smallest eigenvalue of `L L^T` by inverse iteration on its Cholesky factor.
pub fn inverse_power_iteration(l: &DMatrix<f64>, rel_tol: f64, max_iter: usize) -> Result<f64> {
    let n = l.nrows();
    let start: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * ((i * 7919) % 13) as f64).collect();
    let est = power_iteration(
        |x, y| {
            y.copy_from_slice(x);
            cholesky_solve_in_place(l, y);
        },
        start,
        rel_tol,
        max_iter,
    )?;
    Ok(1.0 / est.eigenvalue)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0)]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.mul_vec(&[1.0, 2.0]), vec![3.0, -1.0]);
    }

    #[test]
    fn banded_cholesky_matches_dense() {
        let a = laplacian(40);
        let keep: Vec<usize> = (1..39).collect();
        let chol = BandedCholesky::factor_submatrix(&a, &keep).unwrap();
        let b: Vec<f64> = (0..keep.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut x = b.clone();
        chol.solve_in_place(&mut x);
        let dense = a.to_dense();
        for (i, &ri) in keep.iter().enumerate() {
            let ax: f64 = keep.iter().enumerate().map(|(j, &rj)| dense[(ri, rj)] * x[j]).sum();
            assert!((ax - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn banded_cholesky_rejects_indefinite() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(BandedCholesky::factor_submatrix(&a, &[0, 1]).is_err());
    }

    #[test]
    fn dense_cholesky_reports_pivot() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0]);
        assert_eq!(dense_cholesky(&a).unwrap_err(), 2);
    }

    #[test]
    fn power_iteration_on_laplacian() {
        let n = 50;
        let a = laplacian(n);
        let exact = 2.0 - 2.0 * (std::f64::consts::PI * n as f64 / (n as f64 + 1.0)).cos();
        let start = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let est = power_iteration(|x, y| a.mul_vec_into(x, y), start, 1e-10, 10_000).unwrap();
        assert!((est.eigenvalue - exact).abs() / exact < 1e-3);

        let l = dense_cholesky(&a.to_dense()).unwrap();
        let smallest = inverse_power_iteration(&l, 1e-12, 10_000).unwrap();
        let exact_min = 2.0 - 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!((smallest - exact_min).abs() / exact_min < 1e-6);
    }

    #[test]
    fn power_iteration_gives_up() {
        let mut calls = 0usize;
        let r = power_iteration(
            |x, y| {
                calls += 1;
                let f = if calls % 2 == 0 { 1.0 } else { 2.0 };
                y.iter_mut().zip(x).for_each(|(y, x)| *y = f * x);
            },
            vec![1.0, 0.0],
            1e-12,
            10,
        );
        assert!(r.is_err());
    }
}
