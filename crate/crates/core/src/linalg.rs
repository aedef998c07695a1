//! Small dense linear algebra on `f64` slices.
//!
//! Problem dimensions in this crate are tiny (a handful of coordinates), so
//! vectors are plain `Vec<f64>` and matrices are a row-major [`Matrix`].
//! Factorizations are delegated to `nalgebra`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `a + s * b`
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Dense row-major matrix. Serialized as a list of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from rows; `None` if the rows are ragged or empty.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let cols = rows.first()?.len();
        if cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        Some(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// Action of the transpose (the adjoint in Euclidean space).
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, yi) in y.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    /// Spectral norm by power iteration on `AᵀA`.
    pub fn operator_norm(&self, max_iters: usize, tol: f64) -> f64 {
        // Slightly non-uniform start so it is not orthogonal to a symmetric
        // dominant direction.
        let start: Vec<f64> = (0..self.cols).map(|i| 1.0 + 0.1 * i as f64).collect();
        let mut v = scale(&start, 1.0 / norm(&start));
        let mut sigma2 = 0.0;
        for _ in 0..max_iters {
            let w = self.apply_transpose(&self.apply(&v));
            let nw = norm(&w);
            if nw == 0.0 {
                return 0.0;
            }
            let next = nw;
            v = scale(&w, 1.0 / nw);
            if (next - sigma2).abs() <= tol * next.max(1.0) {
                sigma2 = next;
                break;
            }
            sigma2 = next;
        }
        sigma2.sqrt()
    }

    /// Smallest singular value, counting the missing ones as zero when the
    /// matrix has more columns than rows.
    pub fn min_singular_value(&self) -> f64 {
        if self.cols > self.rows {
            return 0.0;
        }
        let svd = self.to_nalgebra().svd(false, false);
        svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl Serialize for Matrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Matrix::from_rows(&rows)
            .ok_or_else(|| serde::de::Error::custom("matrix rows must be nonempty and of equal length"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_is_adjoint() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 4.0]]).unwrap();
        let x = [0.3, -1.2];
        let y = [2.0, 0.1, -0.7];
        let lhs = dot(&m.apply(&x), &y);
        let rhs = dot(&x, &m.apply_transpose(&y));
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn operator_norm_of_diagonal() {
        let m = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, -5.0]]).unwrap();
        assert!((m.operator_norm(1000, 1e-12) - 5.0).abs() < 1e-8);
        assert!((m.min_singular_value() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn wide_matrix_is_not_injective() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert_eq!(m.min_singular_value(), 0.0);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_none());
    }
}
