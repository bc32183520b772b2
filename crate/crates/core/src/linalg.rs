//! Dense row-major `f64` matrices and the handful of kernels the training
//! code needs: products, a Cholesky solver, and the ridge right-pseudoinverse.
//!
//! Everything here is single-threaded and evaluates in a fixed order, so
//! results are bit-reproducible across runs.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry precondition of [`cholesky_solve`].
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from row slices. Panics on ragged input; meant for
    /// literals in tests and small fixtures.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows in Matrix::from_rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    /// A `len x 1` column vector.
    pub fn column_vector(values: &[f64]) -> Self {
        Matrix {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Copies the listed columns, in order, into a new matrix.
    pub fn select_columns(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, indices.len());
        for i in 0..self.rows {
            let src = self.row(i);
            let dst = &mut out.data[i * indices.len()..(i + 1) * indices.len()];
            for (d, &j) in dst.iter_mut().zip(indices) {
                *d = src[j];
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn scale_in_place(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    fn zip_with(&self, other: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op: "add_assign",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, &b)| *a += b);
        Ok(())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest elementwise absolute difference. Shapes must agree.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Appends a row of ones (the constant input that realizes a bias).
    pub fn with_ones_row(&self) -> Matrix {
        let mut data = self.data.clone();
        data.extend(std::iter::repeat_n(1.0, self.cols));
        Matrix {
            rows: self.rows + 1,
            cols: self.cols,
            data,
        }
    }

    pub fn without_last_row(&self) -> Matrix {
        assert!(self.rows > 0);
        Matrix {
            rows: self.rows - 1,
            cols: self.cols,
            data: self.data[..(self.rows - 1) * self.cols].to_vec(),
        }
    }

    /// Drops the last column (the bias weights of an augmented layer).
    pub fn without_last_col(&self) -> Matrix {
        assert!(self.cols > 0);
        Matrix::from_fn(self.rows, self.cols - 1, |i, j| self[(i, j)])
    }

    fn ensure_finite(self, op: &'static str) -> Result<Matrix> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite(op))
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// `op(a) * op(b)` where `op` optionally transposes.
pub fn gemm(a: &Matrix, b: &Matrix, transpose_a: bool, transpose_b: bool) -> Result<Matrix> {
    let (m, ka) = if transpose_a {
        (a.cols, a.rows)
    } else {
        (a.rows, a.cols)
    };
    let (kb, n) = if transpose_b {
        (b.cols, b.rows)
    } else {
        (b.rows, b.cols)
    };
    if ka != kb {
        return Err(Error::DimensionMismatch {
            op: "gemm",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }

    // Row-major i-k-j loop wants a row-major right operand.
    let bt;
    let b = if transpose_b {
        bt = b.transpose();
        &bt
    } else {
        b
    };

    let mut c = Matrix::zeros(m, n);
    for i in 0..m {
        let c_row = &mut c.data[i * n..(i + 1) * n];
        for k in 0..ka {
            let aik = if transpose_a {
                a.data[k * a.cols + i]
            } else {
                a.data[i * a.cols + k]
            };
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * n..(k + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += aik * bv;
            }
        }
    }
    Ok(c)
}

/// `Xᵀ X + λ I`, the N×N Gram matrix of the batch columns.
pub fn gram(x: &Matrix, lambda: f64) -> Result<Matrix> {
    let mut g = gemm(x, x, true, false)?;
    for i in 0..g.rows {
        g[(i, i)] += lambda;
    }
    Ok(g)
}

/// Lower-triangular Cholesky factor `L` with `a = L Lᵀ`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::DimensionMismatch {
            op: "cholesky",
            lhs: a.shape(),
            rhs: a.shape(),
        });
    }
    for i in 0..n {
        for j in 0..i {
            let (x, y) = (a[(i, j)], a[(j, i)]);
            let scale = x.abs().max(y.abs()).max(f64::MIN_POSITIVE);
            if (x - y).abs() > SYMMETRY_TOL * scale {
                return Err(Error::NotSymmetric { i, j });
            }
        }
    }

    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        // Pivots at rounding level relative to the diagonal mean the matrix
        // is singular to working precision.
        let floor = a[(j, j)].abs() * n as f64 * f64::EPSILON;
        if pivot <= floor || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, pivot });
        }
        let d = pivot.sqrt();
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

/// Solves `a S = b` for symmetric positive-definite `a`.
pub fn cholesky_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if b.rows != a.rows {
        return Err(Error::DimensionMismatch {
            op: "cholesky_solve",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let l = cholesky(a)?;
    solve_with_factor(&l, b).ensure_finite("cholesky_solve")
}

fn solve_with_factor(l: &Matrix, b: &Matrix) -> Matrix {
    let n = l.rows;
    let k = b.cols;
    let mut s = b.clone();
    // Forward substitution: L y = b.
    for i in 0..n {
        for p in 0..i {
            let lip = l[(i, p)];
            if lip != 0.0 {
                for c in 0..k {
                    s.data[i * k + c] -= lip * s.data[p * k + c];
                }
            }
        }
        let d = l[(i, i)];
        for c in 0..k {
            s.data[i * k + c] /= d;
        }
    }
    // Back substitution: Lᵀ x = y.
    for i in (0..n).rev() {
        for p in i + 1..n {
            let lpi = l[(p, i)];
            if lpi != 0.0 {
                for c in 0..k {
                    s.data[i * k + c] -= lpi * s.data[p * k + c];
                }
            }
        }
        let d = l[(i, i)];
        for c in 0..k {
            s.data[i * k + c] /= d;
        }
    }
    s
}

/// Computes `G (XᵀX + λI)⁻¹ Xᵀ` for `g: D₂×N`, `x: D×N`.
///
/// Only the N×N Gram system is factored; no D×D matrix is ever formed. For
/// `N > D` with `λ = 0` the Gram matrix is singular and the call fails with
/// [`Error::NotPositiveDefinite`]; no jitter is added.
pub fn ridge_right_pinv_apply(g: &Matrix, x: &Matrix, lambda: f64) -> Result<Matrix> {
    if g.cols != x.cols {
        return Err(Error::DimensionMismatch {
            op: "ridge_right_pinv_apply",
            lhs: g.shape(),
            rhs: x.shape(),
        });
    }
    if !(lambda >= 0.0) {
        return Err(Error::DegenerateInput(format!(
            "ridge coefficient must be nonnegative, got {lambda}"
        )));
    }
    let a = gram(x, lambda)?;
    // G A⁻¹ = (A⁻¹ Gᵀ)ᵀ since A is symmetric.
    let s = cholesky_solve(&a, &g.transpose())?;
    gemm(&s, x, true, true)?.ensure_finite("ridge_right_pinv_apply")
}

/// The pseudoinverse of a vector, `xᵀ / (‖x‖² + ε)`, as a 1×D row.
pub fn vector_pinv(x: &[f64], epsilon: f64) -> Result<Matrix> {
    let denom = x.iter().map(|v| v * v).sum::<f64>() + epsilon;
    if denom == 0.0 {
        return Err(Error::DegenerateInput(
            "pseudoinverse of the zero vector with epsilon = 0".into(),
        ));
    }
    Ok(Matrix {
        rows: 1,
        cols: x.len(),
        data: x.iter().map(|v| v / denom).collect(),
    })
}
