//! Dense row-major matrices and the handful of kernels the network needs.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Clip applied to the target probability before taking its logarithm.
pub const LOSS_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.data
            .chunks(self.cols.max(1))
            .take(self.rows)
            .map(<[T]>::to_vec)
            .collect()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Copies rows `start..end` into a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Same rows in reverse order.
    pub fn reversed_rows(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for i in (0..self.rows).rev() {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise conversion to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Third-order tensor stored as `d0` consecutive `d1 x d2` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    dims: (usize, usize, usize),
    data: Vec<T>,
}

impl<T: Scalar> Tensor3<T> {
    pub fn zeros(d0: usize, d1: usize, d2: usize) -> Self {
        Self {
            dims: (d0, d1, d2),
            data: vec![T::zero(); d0 * d1 * d2],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn matrix(&self, i: usize) -> Matrix<T> {
        let (_, d1, d2) = self.dims;
        Matrix {
            rows: d1,
            cols: d2,
            data: self.data[i * d1 * d2..(i + 1) * d1 * d2].to_vec(),
        }
    }

    pub fn set_matrix(&mut self, i: usize, m: &Matrix<T>) -> Result<()> {
        let (_, d1, d2) = self.dims;
        if m.shape() != (d1, d2) {
            return Err(Error::ShapeMismatch(format!(
                "tensor slice is {d1}x{d2}, matrix is {}x{}",
                m.rows, m.cols
            )));
        }
        self.data[i * d1 * d2..(i + 1) * d1 * d2].copy_from_slice(&m.data);
        Ok(())
    }
}

impl<T> std::ops::Index<(usize, usize, usize)> for Tensor3<T> {
    type Output = T;
    fn index(&self, (i, j, k): (usize, usize, usize)) -> &T {
        let (_, d1, d2) = self.dims;
        &self.data[(i * d1 + j) * d2 + k]
    }
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::ShapeMismatch(format!(
            "{what}: expected length {expected}, got {got}"
        )));
    }
    Ok(())
}

/// `W x` for an `n x d` matrix and a length-`d` vector.
pub fn matvec<T: Scalar>(w: &Matrix<T>, x: &[T]) -> Result<Vec<T>> {
    check_len("matvec input", w.cols, x.len())?;
    let mut out = vec![T::zero(); w.rows];
    matvec_acc(w, x, &mut out);
    Ok(out)
}

/// `W x + b`.
pub fn affine<T: Scalar>(w: &Matrix<T>, x: &[T], b: &[T]) -> Result<Vec<T>> {
    check_len("affine input", w.cols, x.len())?;
    check_len("affine bias", w.rows, b.len())?;
    let mut out = b.to_vec();
    matvec_acc(w, x, &mut out);
    Ok(out)
}

/// `out += W x`. Shapes are the caller's responsibility.
pub(crate) fn matvec_acc<T: Scalar>(w: &Matrix<T>, x: &[T], out: &mut [T]) {
    debug_assert_eq!(w.cols, x.len());
    debug_assert_eq!(w.rows, out.len());
    for (o, row) in out.iter_mut().zip(w.data.chunks_exact(w.cols.max(1))) {
        let mut acc = T::zero();
        for (&a, &b) in row.iter().zip(x) {
            acc += a * b;
        }
        *o += acc;
    }
}

/// `out += W^T y`.
pub(crate) fn matvec_t_acc<T: Scalar>(w: &Matrix<T>, y: &[T], out: &mut [T]) {
    debug_assert_eq!(w.rows, y.len());
    debug_assert_eq!(w.cols, out.len());
    for (&yi, row) in y.iter().zip(w.data.chunks_exact(w.cols.max(1))) {
        if yi == T::zero() {
            continue;
        }
        for (o, &a) in out.iter_mut().zip(row) {
            *o += a * yi;
        }
    }
}

/// `G += a b^T`.
pub(crate) fn outer_acc<T: Scalar>(g: &mut Matrix<T>, a: &[T], b: &[T]) {
    debug_assert_eq!(g.rows, a.len());
    debug_assert_eq!(g.cols, b.len());
    let cols = g.cols;
    for (&ai, row) in a.iter().zip(g.data.chunks_exact_mut(cols.max(1))) {
        if ai == T::zero() {
            continue;
        }
        for (o, &bj) in row.iter_mut().zip(b) {
            *o += ai * bj;
        }
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn tanh<T: Scalar>(x: T) -> T {
    x.tanh()
}

fn check_finite<T: Scalar>(x: &[T]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput)
    }
}

pub fn sigmoid_vec<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    check_finite(x)?;
    Ok(x.iter().map(|&v| sigmoid(v)).collect())
}

pub fn tanh_vec<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    check_finite(x)?;
    Ok(x.iter().map(|&v| v.tanh()).collect())
}

/// Softmax with max subtraction.
pub fn softmax<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    check_finite(x)?;
    if x.is_empty() {
        return Err(Error::ShapeMismatch("softmax of an empty vector".into()));
    }
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `-ln(max(p[y], 1e-12))`.
pub fn cross_entropy<T: Scalar>(p: &[T], y_index: usize) -> Result<T> {
    let py = *p.get(y_index).ok_or_else(|| {
        Error::ShapeMismatch(format!(
            "class index {y_index} out of range for {} classes",
            p.len()
        ))
    })?;
    Ok(-py.max(T::of(LOSS_CLIP)).ln())
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: Scalar>(x: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}
