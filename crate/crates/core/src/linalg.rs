//! Dense row-major matrices and the two solve primitives the training loop
//! reduces to: Gram products and ridge-regularized SPD solves.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};
use crate::scalar::{Scalar, Strided};

/// Dense row-major matrix with finite entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix<T>", bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

#[derive(Deserialize)]
struct RawMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> TryFrom<RawMatrix<T>> for Matrix<T> {
    type Error = Error;

    fn try_from(raw: RawMatrix<T>) -> Result<Self> {
        Matrix::from_vec(raw.rows, raw.cols, raw.data)
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting ragged or non-finite input.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(mismatch("Matrix::from_vec", rows * cols, data.len()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(mismatch("Matrix::from_rows", cols, bad.len()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub(crate) fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
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

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Copies a contiguous block of columns.
    pub fn columns(&self, range: Range<usize>) -> Self {
        assert!(range.end <= self.cols, "column range out of bounds");
        let width = range.len();
        let mut data = Vec::with_capacity(self.rows * width);
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[range.clone()]);
        }
        Self { rows: self.rows, cols: width, data }
    }

    /// Concatenates column blocks left to right.
    pub fn hstack(blocks: &[Matrix<T>]) -> Result<Self> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        if let Some(bad) = blocks.iter().find(|b| b.rows != rows) {
            return Err(mismatch("Matrix::hstack", rows, bad.rows));
        }
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for b in blocks {
                data.extend_from_slice(b.row(i));
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_shape("zip_map", other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.same_shape("add_assign", other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_sq(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        self.frobenius_sq().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.same_shape("max_abs_diff", other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max))
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(mismatch("matmul", self.cols, other.rows));
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, self.view(), other.view(), T::zero(), &mut out);
        Ok(Self::from_raw(m, n, out))
    }

    /// `selfᵀ * other`.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(mismatch("t_matmul", self.rows, other.rows));
        }
        let (m, k, n) = (self.cols, self.rows, other.cols);
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, self.view_t(), other.view(), T::zero(), &mut out);
        Ok(Self::from_raw(m, n, out))
    }

    fn view(&self) -> Strided<'_, T> {
        Strided { data: &self.data, row_stride: self.cols, col_stride: 1 }
    }

    fn view_t(&self) -> Strided<'_, T> {
        Strided { data: &self.data, row_stride: 1, col_stride: self.cols }
    }

    fn same_shape(&self, op: &'static str, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(mismatch(op, format!("{:?}", self.shape()), format!("{:?}", other.shape())));
        }
        Ok(())
    }
}

/// `A Aᵀ`. The result is exactly symmetric.
pub fn gram<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    if a.rows == 0 {
        return Err(Error::InvalidArgument("gram of a matrix with zero rows".into()));
    }
    let mut g = cross_gram(a, a)?;
    let n = g.rows;
    for i in 0..n {
        for j in (i + 1)..n {
            let upper = g.data[i * n + j];
            g.data[j * n + i] = upper;
        }
    }
    Ok(g)
}

/// `Z Aᵀ`.
pub fn cross_gram<T: Scalar>(z: &Matrix<T>, a: &Matrix<T>) -> Result<Matrix<T>> {
    if z.cols != a.cols {
        return Err(mismatch("cross_gram", format!("{} columns", z.cols), format!("{} columns", a.cols)));
    }
    let (m, k, n) = (z.rows, z.cols, a.rows);
    let mut out = vec![T::zero(); m * n];
    T::gemm(m, k, n, z.view(), a.view_t(), T::zero(), &mut out);
    Ok(Matrix::from_raw(m, n, out))
}

/// Cholesky factor `L Lᵀ = G + ridge I` of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct SpdFactor<T> {
    lower: Matrix<T>,
}

impl<T: Scalar> SpdFactor<T> {
    pub fn dimension(&self) -> usize {
        self.lower.rows
    }

    pub fn lower(&self) -> &Matrix<T> {
        &self.lower
    }

    /// Rebuilds `L Lᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let l = &self.lower;
        Matrix::from_fn(l.rows, l.rows, |i, j| {
            (0..=i.min(j)).map(|k| l.get(i, k) * l.get(j, k)).sum()
        })
    }
}

/// Factors `g + ridge I`. Fails with the index of the first non-positive pivot.
pub fn spd_factor<T: Scalar>(g: &Matrix<T>, ridge: T) -> Result<SpdFactor<T>> {
    if g.rows != g.cols {
        return Err(mismatch("spd_factor", "square matrix", format!("{:?}", g.shape())));
    }
    if !(ridge >= T::zero()) || !ridge.is_finite() {
        return Err(Error::InvalidArgument(format!("ridge must be finite and nonnegative, got {ridge}")));
    }
    let n = g.rows;
    let max_diag = (0..n).map(|i| (g.get(i, i) + ridge).abs()).fold(T::zero(), T::max);
    let tol = T::epsilon() * T::lit(n as f64) * max_diag;

    let mut l = vec![T::zero(); n * n];
    for j in 0..n {
        let mut d = g.get(j, j) + ridge;
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > tol) || !d.is_finite() {
            return Err(Error::SingularMatrix { pivot: j });
        }
        let root = d.sqrt();
        l[j * n + j] = root;
        for i in (j + 1)..n {
            let mut s = g.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / root;
        }
    }
    Ok(SpdFactor { lower: Matrix::from_raw(n, n, l) })
}

/// `M⁻¹ B` where `M` is the factored matrix.
pub fn solve_left<T: Scalar>(f: &SpdFactor<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    let n = f.dimension();
    if b.rows != n {
        return Err(mismatch("solve_left", format!("{n} rows"), format!("{} rows", b.rows)));
    }
    let l = &f.lower;
    let w = b.cols;
    let mut x = b.data.clone();
    // L y = b, one right-hand-side row at a time
    for i in 0..n {
        let (done, rest) = x.split_at_mut(i * w);
        let row = &mut rest[..w];
        for k in 0..i {
            let coef = l.get(i, k);
            if coef != T::zero() {
                for (r, &p) in row.iter_mut().zip(&done[k * w..(k + 1) * w]) {
                    *r -= coef * p;
                }
            }
        }
        let d = l.get(i, i);
        row.iter_mut().for_each(|r| *r /= d);
    }
    // Lᵀ x = y
    for i in (0..n).rev() {
        let (head, tail) = x.split_at_mut((i + 1) * w);
        let row = &mut head[i * w..];
        for k in (i + 1)..n {
            let coef = l.get(k, i);
            if coef != T::zero() {
                let prev = &tail[(k - i - 1) * w..(k - i) * w];
                for (r, &p) in row.iter_mut().zip(prev) {
                    *r -= coef * p;
                }
            }
        }
        let d = l.get(i, i);
        row.iter_mut().for_each(|r| *r /= d);
    }
    Ok(Matrix::from_raw(n, w, x))
}

/// `C M⁻¹` where `M` is the factored (symmetric) matrix.
pub fn solve_right<T: Scalar>(c: &Matrix<T>, f: &SpdFactor<T>) -> Result<Matrix<T>> {
    if c.cols != f.dimension() {
        return Err(mismatch(
            "solve_right",
            format!("{} columns", f.dimension()),
            format!("{} columns", c.cols),
        ));
    }
    Ok(solve_left(f, &c.transpose())?.transpose())
}

/// Ridge used for a Gram matrix: `relative * trace(G) / n`.
pub fn scaled_ridge<T: Scalar>(g: &Matrix<T>, relative: T) -> T {
    if g.rows == 0 {
        return T::zero();
    }
    relative * g.trace() / T::lit(g.rows as f64)
}

/// Factors `G + εI` with `ε = relative·tr(G)/n`, retrying once with
/// `max(ε, 1e-6·tr(G)/n)` when the first attempt hits a non-positive pivot.
pub fn factor_gram<T: Scalar>(g: &Matrix<T>, relative: T) -> Result<(SpdFactor<T>, T)> {
    let ridge = scaled_ridge(g, relative);
    match spd_factor(g, ridge) {
        Ok(f) => Ok((f, ridge)),
        Err(Error::SingularMatrix { .. }) => {
            let retry = ridge.max(scaled_ridge(g, T::lit(1e-6)));
            spd_factor(g, retry).map(|f| (f, retry))
        }
        Err(e) => Err(e),
    }
}
