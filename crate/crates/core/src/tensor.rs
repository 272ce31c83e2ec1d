//! Dense `f64` vectors and matrices plus the elementwise and affine kernels
//! the network is built from.
//!
//! Everything here is value-level; [`crate::tape`] records the same kernels
//! for differentiation.

use std::fmt;
use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense column vector.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Self {
        Vector(data)
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        Vector(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        check_same("dot", self, other)?;
        Ok(self.iter().zip(other.iter()).map(|(a, b)| a * b).sum())
    }

    /// Splits into `[0, at)` and `[at, dim)`.
    pub fn split_at(&self, at: usize) -> Result<(Vector, Vector)> {
        if at > self.dim() {
            return Err(Error::shape("split", format!("dim {}", self.dim()), format!("at {at}")));
        }
        let (a, b) = self.0.split_at(at);
        Ok((Vector(a.to_vec()), Vector(b.to_vec())))
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// A dense row-major matrix. Row-major order is also the serialized layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
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

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::shape(
                "matrix",
                Shape(rows, cols),
                format!("{} values", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::shape("matrix", format!("{cols} cols"), format!("row of {}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> Shape {
        Shape(self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `W · x` without bias.
    pub fn matvec(&self, x: &[f64]) -> Result<Vector> {
        if self.cols != x.len() {
            return Err(Error::shape("matvec", self.shape(), format!("x dim {}", x.len())));
        }
        Ok(Vector(
            self.data
                .chunks_exact(self.cols.max(1))
                .take(self.rows)
                .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum())
                .collect(),
        ))
    }
}

/// `(rows, cols)`, printed as `rows×cols`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape(pub usize, pub usize);

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}

fn check_same(op: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(op, format!("dim {}", a.len()), format!("dim {}", b.len())));
    }
    Ok(())
}

/// `W · x + b`.
pub fn affine(w: &Matrix, x: &[f64], b: &[f64]) -> Result<Vector> {
    if b.len() != w.rows() {
        return Err(Error::shape("affine", w.shape(), format!("b dim {}", b.len())));
    }
    let mut out = w.matvec(x)?;
    for (o, bi) in out.iter_mut().zip(b) {
        *o += bi;
    }
    Ok(out)
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &[f64]) -> Vector {
    Vector(x.iter().map(|&v| sigmoid_scalar(v)).collect())
}

pub fn tanh(x: &[f64]) -> Vector {
    Vector(x.iter().map(|v| v.tanh()).collect())
}

pub fn hadamard(a: &[f64], b: &[f64]) -> Result<Vector> {
    check_same("hadamard", a, b)?;
    Ok(Vector(a.iter().zip(b).map(|(x, y)| x * y).collect()))
}

pub fn add(a: &[f64], b: &[f64]) -> Result<Vector> {
    check_same("add", a, b)?;
    Ok(Vector(a.iter().zip(b).map(|(x, y)| x + y).collect()))
}

/// `a ⊕ b`, `a` first.
pub fn concat(a: &[f64], b: &[f64]) -> Vector {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    Vector(v)
}

/// Numerically stable softmax (max-logit subtraction).
pub fn softmax(logits: &[f64]) -> Vector {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Vector(exps.into_iter().map(|e| e / total).collect())
}

/// `log Σ exp(z)` with max subtraction.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_identity() {
        let w = Matrix::identity(2);
        assert_eq!(affine(&w, &[3.0, -1.0], &[0.0, 0.0]).unwrap().into_inner(), vec![3.0, -1.0]);
    }

    #[test]
    fn affine_zero_matrix_returns_bias() {
        let w = Matrix::zeros(2, 2);
        assert_eq!(affine(&w, &[9.0, -4.0], &[5.0, 7.0]).unwrap().into_inner(), vec![5.0, 7.0]);
    }

    #[test]
    fn affine_hand_evaluated() {
        let w = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(affine(&w, &[1.0, 1.0], &[1.0, 0.0]).unwrap().into_inner(), vec![4.0, 7.0]);
    }

    #[test]
    fn affine_mismatch_names_both_shapes() {
        let w = Matrix::zeros(2, 3);
        let err = affine(&w, &[1.0, 2.0], &[0.0, 0.0]).unwrap_err().to_string();
        assert!(err.contains("2x3") && err.contains("x dim 2"), "{err}");
        let err = affine(&w, &[1.0, 2.0, 3.0], &[0.0]).unwrap_err().to_string();
        assert!(err.contains("2x3") && err.contains("b dim 1"), "{err}");
    }

    #[test]
    fn elementwise_basics() {
        assert_eq!(sigmoid(&[0.0; 3]).into_inner(), vec![0.5; 3]);
        assert_eq!(tanh(&[0.0; 3]).into_inner(), vec![0.0; 3]);
        assert_eq!(concat(&[1.0, 2.0], &[3.0]).into_inner(), vec![1.0, 2.0, 3.0]);
        assert_eq!(hadamard(&[1.0, 2.0], &[3.0, 4.0]).unwrap().into_inner(), vec![3.0, 8.0]);
        assert!(add(&[1.0], &[1.0, 2.0]).is_err());
        assert!(hadamard(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sigmoid_is_finite_at_extremes() {
        let s = sigmoid(&[-1e4, 1e4]);
        assert_eq!(s.into_inner(), vec![0.0, 1.0]);
    }

    #[test]
    fn softmax_hand_values() {
        let p = softmax(&[2f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(softmax(&[0.0; 4]).into_inner(), vec![0.25; 4]);
    }

    #[test]
    fn argmax_ties_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    proptest::proptest! {
        #[test]
        fn concat_then_split_recovers(a in proptest::collection::vec(-1e3f64..1e3, 0..8),
                                      b in proptest::collection::vec(-1e3f64..1e3, 0..8)) {
            let c = concat(&a, &b);
            let (x, y) = c.split_at(a.len()).unwrap();
            proptest::prop_assert_eq!(x.into_inner(), a);
            proptest::prop_assert_eq!(y.into_inner(), b);
        }

        #[test]
        fn softmax_shift_invariant(z in proptest::collection::vec(-50f64..50.0, 2..10), c in -100f64..100.0) {
            let p = softmax(&z);
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let q = softmax(&shifted);
            for (a, b) in p.iter().zip(q.iter()) {
                proptest::prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
