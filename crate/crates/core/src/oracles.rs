// SPDX-License-Identifier: Apache-2.0

//! Brute-force reference kernels and quantization helpers.
//!
//! Everything here evaluates its definition directly, with no tiling or
//! reordering, so the simulator and the SIMD layer can be checked against it.

use std::ops::{Add, Mul};

use thiserror::Error;

use crate::workload::Precision;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("block size {block} does not divide length {len}")]
    Block { block: usize, len: usize },
    #[error("inner dimensions differ: {0} vs {1}")]
    Inner(usize, usize),
    #[error("division by zero at index {0}")]
    DivByZero(usize),
    #[error("log of non-positive value at index {0}")]
    LogDomain(usize),
    #[error("{op} expects {expected} input vectors, got {got}")]
    Arity { op: &'static str, expected: usize, got: usize },
    #[error("{0} is not an integer precision")]
    NotInteger(Precision),
    #[error("scale must be positive")]
    Scale,
}

/// Ring operations the integer and float kernels share.
pub trait Scalar: Copy + Default + PartialEq + Add<Output = Self> + Mul<Output = Self> + std::fmt::Debug {}

impl<T> Scalar for T where T: Copy + Default + PartialEq + Add<Output = T> + Mul<Output = T> + std::fmt::Debug {}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::default(); rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Matrix { rows: rows.len(), cols, data: rows.concat() }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }
}

fn same_len<T>(a: &[T], b: &[T]) -> Result<usize, OracleError> {
    if a.len() == b.len() {
        Ok(a.len())
    } else {
        Err(OracleError::Length(a.len(), b.len()))
    }
}

/// `C[n] = sum_k A[k] * B[(n - k) mod d]`.
pub fn circ_conv<T: Scalar>(a: &[T], b: &[T]) -> Result<Vec<T>, OracleError> {
    let d = same_len(a, b)?;
    Ok((0..d).map(|n| (0..d).fold(T::default(), |acc, k| acc + a[k] * b[(n + d - k) % d])).collect())
}

/// Unbinding counterpart of [`circ_conv`]: `C[n] = sum_k A[(n + k) mod d] * B[k]`.
///
/// With `A` a bound vector and `B` a key this slides the key over `A`, so a
/// delta key returns `A` unchanged and `circ_corr(A, B)` equals
/// `circ_conv(A, B')` with `B'[i] = B[-i mod d]`.
pub fn circ_corr<T: Scalar>(a: &[T], b: &[T]) -> Result<Vec<T>, OracleError> {
    let d = same_len(a, b)?;
    Ok((0..d).map(|n| (0..d).fold(T::default(), |acc, k| acc + a[(n + k) % d] * b[k])).collect())
}

/// Binary vector kernel usable per block.
pub type VectorKernel<T> = fn(&[T], &[T]) -> Result<Vec<T>, OracleError>;

/// Applies `op` independently to every aligned block of `block` elements.
pub fn blockwise<T: Scalar>(op: VectorKernel<T>, a: &[T], b: &[T], block: usize) -> Result<Vec<T>, OracleError> {
    let len = same_len(a, b)?;
    if block == 0 || len % block != 0 {
        return Err(OracleError::Block { block, len });
    }
    let mut out = Vec::with_capacity(len);
    for (ca, cb) in a.chunks(block).zip(b.chunks(block)) {
        out.extend(op(ca, cb)?);
    }
    Ok(out)
}

/// Cosine similarity of `query` against every row of `codebook`.
///
/// Rows (or a query) with zero norm score 0; their indices are returned as
/// the second element.
pub fn similarity(query: &[f64], codebook: &Matrix<f64>) -> Result<(Vec<f64>, Vec<usize>), OracleError> {
    if query.len() != codebook.cols {
        return Err(OracleError::Length(query.len(), codebook.cols));
    }
    let qn = query.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut scores = Vec::with_capacity(codebook.rows);
    let mut degenerate = Vec::new();
    for r in 0..codebook.rows {
        let row = codebook.row(r);
        let rn = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if rn == 0.0 || qn == 0.0 {
            degenerate.push(r);
            scores.push(0.0);
        } else {
            let dot: f64 = query.iter().zip(row).map(|(a, b)| a * b).sum();
            scores.push(dot / (qn * rn));
        }
    }
    Ok((scores, degenerate))
}

/// Naive `i-j-p` triple-loop product.
pub fn gemm<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>, OracleError> {
    if a.cols != b.rows {
        return Err(OracleError::Inner(a.cols, b.rows));
    }
    Ok(Matrix::from_fn(a.rows, b.cols, |i, j| (0..a.cols).fold(T::default(), |acc, p| acc + a.get(i, p) * b.get(p, j))))
}

/// Element-wise operations of the SIMD unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimdOp {
    Add,
    Mul,
    Div,
    Exp,
    Log,
    Tanh,
    Norm,
    Softmax,
    ReduceSum,
}

impl SimdOp {
    fn arity(self) -> usize {
        match self {
            SimdOp::Add | SimdOp::Mul | SimdOp::Div => 2,
            _ => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            SimdOp::Add => "add",
            SimdOp::Mul => "mul",
            SimdOp::Div => "div",
            SimdOp::Exp => "exp",
            SimdOp::Log => "log",
            SimdOp::Tanh => "tanh",
            SimdOp::Norm => "norm",
            SimdOp::Softmax => "softmax",
            SimdOp::ReduceSum => "reduce_sum",
        }
    }
}

/// Reference evaluation. `Norm` and `ReduceSum` return one element; `Norm` is
/// the L2 norm.
pub fn elemwise(op: SimdOp, inputs: &[&[f64]]) -> Result<Vec<f64>, OracleError> {
    if inputs.len() != op.arity() {
        return Err(OracleError::Arity { op: op.name(), expected: op.arity(), got: inputs.len() });
    }
    let x = inputs[0];
    let zip = |f: fn(f64, f64) -> f64| -> Result<Vec<f64>, OracleError> {
        same_len(x, inputs[1])?;
        Ok(x.iter().zip(inputs[1]).map(|(&a, &b)| f(a, b)).collect())
    };
    match op {
        SimdOp::Add => zip(|a, b| a + b),
        SimdOp::Mul => zip(|a, b| a * b),
        SimdOp::Div => {
            if let Some(i) = inputs[1].iter().position(|&b| b == 0.0) {
                return Err(OracleError::DivByZero(i));
            }
            zip(|a, b| a / b)
        }
        SimdOp::Exp => Ok(x.iter().map(|v| v.exp()).collect()),
        SimdOp::Log => {
            if let Some(i) = x.iter().position(|&v| v <= 0.0) {
                return Err(OracleError::LogDomain(i));
            }
            Ok(x.iter().map(|v| v.ln()).collect())
        }
        SimdOp::Tanh => Ok(x.iter().map(|v| v.tanh()).collect()),
        SimdOp::Norm => Ok(vec![x.iter().map(|v| v * v).sum::<f64>().sqrt()]),
        SimdOp::ReduceSum => Ok(vec![x.iter().sum()]),
        SimdOp::Softmax => {
            let peak = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = x.iter().map(|v| (v - peak).exp()).collect();
            let s: f64 = e.iter().sum();
            Ok(e.into_iter().map(|v| v / s).collect())
        }
    }
}

/// Symmetric per-tensor quantization, round half to even.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    pub scale: f64,
    pub precision: Precision,
}

impl QuantParams {
    pub fn new(scale: f64, precision: Precision) -> Result<Self, OracleError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(OracleError::Scale);
        }
        if !precision.is_integer() {
            return Err(OracleError::NotInteger(precision));
        }
        Ok(QuantParams { scale, precision })
    }
}

pub fn quantize(x: &[f64], q: QuantParams) -> Vec<i32> {
    let (lo, hi) = q.precision.int_range().expect("QuantParams holds an integer precision");
    x.iter().map(|v| ((v / q.scale).round_ties_even() as i64).clamp(lo.into(), hi.into()) as i32).collect()
}

pub fn dequantize(x: &[i32], q: QuantParams) -> Vec<f64> {
    x.iter().map(|&v| v as f64 * q.scale).collect()
}
