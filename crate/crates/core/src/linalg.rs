//! Dense row-major matrices and a one-sided Jacobi SVD.
//!
//! The crate only ever needs linear algebra on small dense matrices (layer
//! weights, their products, and 2-D data transforms), so this module keeps
//! to plain `Vec<f64>` storage and textbook algorithms:
//!
//! - matrix–vector and matrix–matrix products with per-row compensated
//!   summation (deterministic, order-fixed),
//! - a one-sided Jacobi SVD (rotate columns until mutually orthogonal;
//!   singular values are then column norms), robust for the modest sizes
//!   used here and accurate to ~1e-13 relative.
//!
//! Conventions: `Matrix` is `rows × cols`, row-major; `svd` returns the
//! economy factorization `A = U · diag(s) · Vᵀ` with `s` sorted in
//! descending order. Columns of `U` belonging to zero singular values are
//! left as zero vectors (they never contribute to reconstructions).

use serde::{Deserialize, Serialize};

use crate::error::{DgError, Result};
use crate::numeric::Kahan;

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Zero matrix of the given shape (both dimensions must be positive).
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(DgError::invalid(
                "matrix shape",
                format!("dimensions must be positive, got {rows}x{cols}"),
            ));
        }
        Ok(Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        })
    }

    /// Identity matrix of size `n`.
    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        Ok(m)
    }

    /// Build from nested rows; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut m = Self::zeros(nrows, ncols)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(DgError::DimensionMismatch {
                    expected: ncols,
                    got: row.len(),
                });
            }
            m.data[i * ncols..(i + 1) * ncols].copy_from_slice(row);
        }
        Ok(m)
    }

    /// Build from a flat row-major buffer.
    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(DgError::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if rows == 0 || cols == 0 {
            return Err(DgError::invalid(
                "matrix shape",
                format!("dimensions must be positive, got {rows}x{cols}"),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Number of rows.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of columns.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Flat row-major view of the entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable flat row-major view of the entries.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Entry at (`r`, `c`); panics on out-of-range indices.
    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Set entry at (`r`, `c`); panics on out-of-range indices.
    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// One row as a slice.
    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · x` for a column vector `x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(DgError::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        let mut out = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let mut acc = Kahan::new();
            for (a, b) in self.row(r).iter().zip(x) {
                acc.add(a * b);
            }
            out.push(acc.value());
        }
        Ok(out)
    }

    /// `selfᵀ · x` (used by backpropagation without materializing a transpose).
    pub fn matvec_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(DgError::DimensionMismatch {
                expected: self.rows,
                got: x.len(),
            });
        }
        let mut out = vec![Kahan::new(); self.cols];
        for r in 0..self.rows {
            let xr = x[r];
            for (c, a) in self.row(r).iter().enumerate() {
                out[c].add(a * xr);
            }
        }
        Ok(out.into_iter().map(|k| k.value()).collect())
    }

    /// Matrix product `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(DgError::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols)?;
        for r in 0..self.rows {
            for c in 0..other.cols {
                let mut acc = Kahan::new();
                for k in 0..self.cols {
                    acc.add(self.get(r, k) * other.get(k, c));
                }
                out.set(r, c, acc.value());
            }
        }
        Ok(out)
    }

    /// Transposed copy.
    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix {
            rows: self.cols,
            cols: self.rows,
            data: vec![0.0; self.data.len()],
        };
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        let mut acc = Kahan::new();
        for &v in &self.data {
            acc.add(v * v);
        }
        acc.value().sqrt()
    }

    /// Solve `self · x = rhs` for square `self` by Gaussian elimination
    /// with partial pivoting. Errors if the matrix is singular to working
    /// precision (pivot below `1e-12 · max |entry|`).
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if self.rows != self.cols {
            return Err(DgError::invalid(
                "matrix shape",
                format!("solve needs a square matrix, got {}x{}", self.rows, self.cols),
            ));
        }
        if rhs.len() != self.rows {
            return Err(DgError::DimensionMismatch {
                expected: self.rows,
                got: rhs.len(),
            });
        }
        let n = self.rows;
        let mut a = self.data.clone();
        let mut b = rhs.to_vec();
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-12 * scale.max(1e-300);
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&i, &j| {
                    a[i * n + col]
                        .abs()
                        .partial_cmp(&a[j * n + col].abs())
                        .unwrap()
                })
                .unwrap();
            if a[pivot_row * n + col].abs() < tol {
                return Err(DgError::invalid(
                    "matrix",
                    "singular matrix has no inverse image".to_string(),
                ));
            }
            if pivot_row != col {
                for k in 0..n {
                    a.swap(col * n + k, pivot_row * n + k);
                }
                b.swap(col, pivot_row);
            }
            let pivot = a[col * n + col];
            for row in (col + 1)..n {
                let f = a[row * n + col] / pivot;
                if f == 0.0 {
                    continue;
                }
                for k in col..n {
                    a[row * n + k] -= f * a[col * n + k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for col in (0..n).rev() {
            let mut acc = b[col];
            for k in (col + 1)..n {
                acc -= a[col * n + k] * x[k];
            }
            x[col] = acc / a[col * n + col];
        }
        Ok(x)
    }
}

/// Economy SVD `A = U · diag(s) · Vᵀ`.
#[derive(Clone, Debug)]
pub struct Svd {
    /// `rows × r` left factor, `r = min(rows, cols)`.
    pub u: Matrix,
    /// Singular values, descending, length `r`.
    pub s: Vec<f64>,
    /// `cols × r` right factor (columns are right singular vectors).
    pub v: Matrix,
}

impl Svd {
    /// Reconstruct `U · diag(s') · Vᵀ` after replacing the spectrum with
    /// `s_kept` (entries set to zero drop the corresponding rank-1 term).
    pub fn reconstruct(&self, s_kept: &[f64]) -> Result<Matrix> {
        if s_kept.len() != self.s.len() {
            return Err(DgError::DimensionMismatch {
                expected: self.s.len(),
                got: s_kept.len(),
            });
        }
        let rows = self.u.rows();
        let cols = self.v.rows();
        let mut out = Matrix::zeros(rows, cols)?;
        for r in 0..rows {
            for c in 0..cols {
                let mut acc = Kahan::new();
                for (j, &sj) in s_kept.iter().enumerate() {
                    if sj != 0.0 {
                        acc.add(sj * self.u.get(r, j) * self.v.get(c, j));
                    }
                }
                out.set(r, c, acc.value());
            }
        }
        Ok(out)
    }
}

/// One-sided Jacobi SVD.
///
/// Works on a copy of `A` (transposed first if `rows < cols` so the
/// working matrix is tall), repeatedly rotating column pairs until all
/// pairwise inner products are negligible, then reading singular values
/// off as column norms. Converges quadratically; 60 sweeps is far beyond
/// what the small matrices here need, and hitting the cap still returns
/// the best available factorization.
pub fn svd(a: &Matrix) -> Result<Svd> {
    let transposed = a.rows() < a.cols();
    let work_src = if transposed { a.transpose() } else { a.clone() };
    let (m, n) = (work_src.rows(), work_src.cols());

    // Column-major working copy of the tall matrix.
    let mut col = vec![vec![0.0f64; m]; n];
    for (j, column) in col.iter_mut().enumerate() {
        for (i, slot) in column.iter_mut().enumerate() {
            *slot = work_src.get(i, j);
        }
    }
    let mut v = Matrix::identity(n)?;

    let eps = 1e-15;
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut dot = Kahan::new();
                let mut norm_p = Kahan::new();
                let mut norm_q = Kahan::new();
                for i in 0..m {
                    dot.add(col[p][i] * col[q][i]);
                    norm_p.add(col[p][i] * col[p][i]);
                    norm_q.add(col[q][i] * col[q][i]);
                }
                let (d, np, nq) = (dot.value(), norm_p.value(), norm_q.value());
                if d.abs() <= eps * (np * nq).sqrt() || np == 0.0 || nq == 0.0 {
                    continue;
                }
                rotated = true;
                let tau = (nq - np) / (2.0 * d);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (vp, vq) = (col[p][i], col[q][i]);
                    col[p][i] = c * vp - s * vq;
                    col[q][i] = s * vp + c * vq;
                }
                for i in 0..n {
                    let (vp, vq) = (v.get(i, p), v.get(i, q));
                    v.set(i, p, c * vp - s * vq);
                    v.set(i, q, s * vp + c * vq);
                }
            }
        }
        if !rotated {
            break;
        }
    }

    // Singular values are column norms; normalize columns into U.
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = col
        .iter()
        .map(|c| {
            let mut acc = Kahan::new();
            for &x in c {
                acc.add(x * x);
            }
            acc.value().sqrt()
        })
        .collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());

    let mut u = Matrix::zeros(m, n)?;
    let mut s = Vec::with_capacity(n);
    let mut v_sorted = Matrix::zeros(n, n)?;
    for (slot, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        s.push(sigma);
        if sigma > 0.0 {
            for i in 0..m {
                u.set(i, slot, col[j][i] / sigma);
            }
        }
        for i in 0..n {
            v_sorted.set(i, slot, v.get(i, j));
        }
    }

    if transposed {
        // A = (Aᵀ)ᵀ = (U Σ Vᵀ)ᵀ = V Σ Uᵀ: swap the factors back.
        Ok(Svd {
            u: v_sorted,
            s,
            v: u,
        })
    } else {
        Ok(Svd { u, s, v: v_sorted })
    }
}

/// Singular values of `a`, descending.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    Ok(svd(a)?.s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn matvec_matches_hand_computation() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap();
        let y = m.matvec(&[2.0, 0.5]).unwrap();
        assert_eq!(y, vec![3.0, 5.5]);
    }

    #[test]
    fn matvec_rejects_wrong_length() {
        let m = Matrix::identity(2).unwrap();
        assert!(m.matvec(&[1.0]).is_err());
    }

    #[test]
    fn matmul_identity_is_noop() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let i = Matrix::identity(2).unwrap();
        assert_eq!(m.matmul(&i).unwrap(), m);
        assert_eq!(i.matmul(&m).unwrap(), m);
    }

    #[test]
    fn transpose_roundtrip() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(m.transpose().transpose(), m);
    }

    #[test]
    fn solve_recovers_known_solution() {
        let m = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let x = vec![0.5, -2.0];
        let rhs = m.matvec(&x).unwrap();
        let got = m.solve(&rhs).unwrap();
        assert_close(got[0], x[0], 1e-12);
        assert_close(got[1], x[1], 1e-12);
    }

    #[test]
    fn solve_rejects_singular() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(m.solve(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn svd_diagonal_matrix() {
        let m = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let s = singular_values(&m).unwrap();
        assert_close(s[0], 3.0, 1e-12);
        assert_close(s[1], 2.0, 1e-12);
    }

    #[test]
    fn svd_wide_matrix_matches_gram_eigenvalues() {
        // For A = [[1, 2, 3]], AAᵀ = 14 so the lone singular value is √14.
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let s = singular_values(&m).unwrap();
        assert_close(s[0], 14.0f64.sqrt(), 1e-12);
    }

    #[test]
    fn svd_reconstructs_original() {
        let m = Matrix::from_rows(&[
            vec![0.3, -1.2, 0.7],
            vec![2.0, 0.1, -0.4],
            vec![-0.9, 0.8, 1.5],
            vec![0.2, 0.2, 0.2],
        ])
        .unwrap();
        let f = svd(&m).unwrap();
        let back = f.reconstruct(&f.s).unwrap();
        for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
            assert_close(*a, *b, 1e-12);
        }
    }

    #[test]
    fn svd_rank_deficient_has_zero_tail() {
        // Second row is a multiple of the first: rank 1.
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let s = singular_values(&m).unwrap();
        assert!(s[0] > 1.0);
        assert!(s[1].abs() < 1e-12);
    }
}
