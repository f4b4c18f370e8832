//! Small dense square matrices.
//!
//! Storage is row-major and the first index is the row, so `m[(i, j)]` is the
//! entry in row `i`, column `j`. For transition matrices and operators the row
//! is the upper index and the column the lower one (`S^i_j` lives at `(i, j)`).

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative threshold under which a determinant is treated as zero.
pub const SINGULAR_THRESHOLD: f64 = 1e-12;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<R>>", into = "Vec<Vec<R>>")]
#[serde(bound(serialize = "R: Real + Serialize", deserialize = "R: Real + Deserialize<'de>"))]
pub struct Matrix<R> {
    dim: usize,
    data: Vec<R>,
}

impl<R: Real> Matrix<R> {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![R::zero(); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = R::one();
        }
        m
    }

    pub fn diagonal(values: &[R]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from its rows.
    pub fn from_rows<Row: AsRef<[R]>>(rows: &[Row]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::shape("matrix must have at least one row"));
        }
        let mut data = Vec::with_capacity(dim * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::shape(format!(
                    "row {} has {} entries, expected {dim}",
                    i + 1,
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { dim, data })
    }

    /// Builds a matrix whose `j`-th column is `columns[j]`.
    pub fn from_columns<Col: AsRef<[R]>>(columns: &[Col]) -> Result<Self> {
        Ok(Self::from_rows(columns)?.transpose())
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> R) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[R] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[R] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, j: usize) -> Vec<R> {
        (0..self.dim).map(|i| self[(i, j)]).collect()
    }

    pub fn rows(&self) -> Vec<Vec<R>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "matrix dimensions differ");
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == R::zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[R]) -> Vec<R> {
        assert_eq!(self.dim, v.len(), "vector length differs from matrix dimension");
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn scale(&self, alpha: R) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&x| x * alpha).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "matrix dimensions differ");
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn max_abs(&self) -> R {
        self.data.iter().fold(R::zero(), |m, &x| m.max(x.abs()))
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> R {
        assert_eq!(self.dim, other.dim, "matrix dimensions differ");
        self.data
            .iter()
            .zip(&other.data)
            .fold(R::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// `‖self − I‖∞` measured entrywise.
    pub fn identity_residual(&self) -> R {
        self.max_abs_diff(&Self::identity(self.dim))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn is_symmetric(&self, tol: R) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Determinant by partial-pivot elimination.
    pub fn det(&self) -> R {
        let n = self.dim;
        let mut a = self.data.clone();
        let mut det = R::one();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| {
                    a[p * n + col]
                        .abs()
                        .partial_cmp(&a[q * n + col].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(col);
            if a[pivot * n + col] == R::zero() {
                return R::zero();
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                }
                det = -det;
            }
            let p = a[col * n + col];
            det *= p;
            for row in col + 1..n {
                let factor = a[row * n + col] / p;
                if factor != R::zero() {
                    for j in col..n {
                        let v = a[col * n + j];
                        a[row * n + j] -= factor * v;
                    }
                }
            }
        }
        det
    }

    /// True when `|det|` is below the singularity threshold relative to the entry scale.
    pub fn is_singular(&self) -> bool {
        let scale = self.max_abs();
        if scale == R::zero() || !scale.is_finite() {
            return true;
        }
        let normalized = self.scale(scale.recip()).det();
        normalized.abs() < R::lit(SINGULAR_THRESHOLD)
    }

    /// Inverse by Gauss–Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        if self.is_singular() {
            return Err(Error::DegenerateTransition(format!(
                "matrix is singular (det = {})",
                self.det()
            )));
        }
        let n = self.dim;
        let mut a = self.data.clone();
        let mut inv = Self::identity(n).data;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| {
                    a[p * n + col]
                        .abs()
                        .partial_cmp(&a[q * n + col].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(col);
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                    inv.swap(col * n + j, pivot * n + j);
                }
            }
            let p = a[col * n + col];
            for j in 0..n {
                a[col * n + j] /= p;
                inv[col * n + j] /= p;
            }
            for row in 0..n {
                if row == col {
                    continue;
                }
                let factor = a[row * n + col];
                if factor == R::zero() {
                    continue;
                }
                for j in 0..n {
                    let av = a[col * n + j];
                    let iv = inv[col * n + j];
                    a[row * n + j] -= factor * av;
                    inv[row * n + j] -= factor * iv;
                }
            }
        }
        Ok(Self { dim: n, data: inv })
    }

    /// Cholesky pivots; `None` as soon as one is not strictly positive.
    pub fn cholesky_pivots(&self) -> Option<Vec<R>> {
        let n = self.dim;
        let mut l = vec![R::zero(); n * n];
        let mut pivots = Vec::with_capacity(n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > R::zero()) {
                return None;
            }
            pivots.push(d);
            let ljj = d.sqrt();
            l[j * n + j] = ljj;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        Some(pivots)
    }

    pub fn cast<Q: Real>(&self) -> Matrix<Q> {
        Matrix {
            dim: self.dim,
            data: self.data.iter().map(|&x| Q::lit(x.to_f64_lossy())).collect(),
        }
    }
}

impl<R: Real> Index<(usize, usize)> for Matrix<R> {
    type Output = R;

    fn index(&self, (i, j): (usize, usize)) -> &R {
        &self.data[i * self.dim + j]
    }
}

impl<R: Real> IndexMut<(usize, usize)> for Matrix<R> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut R {
        &mut self.data[i * self.dim + j]
    }
}

impl<R: Real> Mul for &Matrix<R> {
    type Output = Matrix<R>;

    fn mul(self, rhs: Self) -> Matrix<R> {
        self.matmul(rhs)
    }
}

impl<R: fmt::Debug> fmt::Debug for Matrix<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.chunks(self.dim.max(1))).finish()
    }
}

impl<R: Real> TryFrom<Vec<Vec<R>>> for Matrix<R> {
    type Error = Error;

    fn try_from(rows: Vec<Vec<R>>) -> Result<Self> {
        let m = Self::from_rows(&rows)?;
        if !m.is_finite() {
            return Err(Error::shape("matrix entries must be finite"));
        }
        Ok(m)
    }
}

impl<R: Real> From<Matrix<R>> for Vec<Vec<R>> {
    fn from(m: Matrix<R>) -> Self {
        m.rows()
    }
}

pub(crate) fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn max_abs_diff<R: Real>(a: &[R], b: &[R]) -> R {
    a.iter().zip(b).fold(R::zero(), |m, (&x, &y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_permutation_is_transpose() {
        let s = Matrix::<f64>::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]).unwrap();
        let t = s.inverse().unwrap();
        assert_eq!(t, s.transpose());
        assert_eq!(s.det(), 1.0);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        // columns e1-e2, e2-e3, e3-e1 sum to zero
        let m = Matrix::<f64>::from_columns(&[
            [1.0, -1.0, 0.0],
            [0.0, 1.0, -1.0],
            [-1.0, 0.0, 1.0],
        ])
        .unwrap();
        assert!(m.is_singular());
        assert!(matches!(m.inverse(), Err(Error::DegenerateTransition(_))));
    }

    #[test]
    fn inverse_needs_pivoting() {
        let m = Matrix::<f64>::from_rows(&[[0.0, 2.0, 1.0], [1.0, 0.0, 0.0], [3.0, 1.0, 4.0]]).unwrap();
        let inv = m.inverse().unwrap();
        assert!((&m * &inv).identity_residual() < 1e-14);
        assert!((m.det() - (-7.0)).abs() < 1e-14);
    }

    #[test]
    fn cholesky_detects_indefinite() {
        let g = Matrix::<f64>::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(g.cholesky_pivots().is_none());
        let g = Matrix::<f64>::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        assert_eq!(g.cholesky_pivots().unwrap().len(), 2);
    }

    #[test]
    fn rows_deserialize_first_index_as_row() {
        let m: Matrix<f64> = serde_json::from_str("[[1, 2], [3, 4]]").unwrap();
        assert_eq!(m[(0, 1)], 2.0);
        assert_eq!(m[(1, 0)], 3.0);
        assert!(serde_json::from_str::<Matrix<f64>>("[[1, 2], [3]]").is_err());
    }
}
