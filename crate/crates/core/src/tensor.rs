//! Dense row-major `f64` tensors of rank 0 to 3.
//!
//! Shapes follow two conventions used throughout the crate: a leading batch
//! axis for per-sample data (`[B, n]`, `[B, n, n]`) and "last two axes are the
//! matrix" for matrix products.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::InvalidShape {
                shape: shape.to_vec(),
                reason: alloc::format!("expected {} values, got {}", numel(shape), data.len()),
            });
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    /// Like [`Tensor::new`] but also rejects NaN and infinities.
    pub fn new_checked(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let t = Self::new(shape, data)?;
        t.check_finite("Tensor::new_checked")?;
        Ok(t)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![value; numel(shape)] }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: Vec::new(), data: vec![value] }
    }

    pub fn vector(values: &[f64]) -> Self {
        Tensor { shape: vec![values.len()], data: values.to_vec() }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(&[rows, cols], data)
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut t = Self::zeros(&[n, n]);
        for (i, v) in values.iter().enumerate() {
            t.data[i * n + i] = *v;
        }
        t
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        Tensor { shape: shape.to_vec(), data: (0..numel(shape)).map(&mut f).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn rows(&self) -> usize {
        self.shape[self.shape.len() - 2]
    }

    pub fn cols(&self) -> usize {
        self.shape[self.shape.len() - 1]
    }

    /// Element `(i, j)` of a rank-2 tensor.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let c = self.cols();
        self.data[i * c + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, op: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.shape.clone(),
                right: shape.to_vec(),
            });
        }
        Ok(Tensor { shape: shape.to_vec(), data: self.data.clone() })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch { op, left: self.shape.clone(), right: other.shape.clone() });
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|v| v * c)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Matrix product over the last two axes; a rank-2 operand is shared
    /// across the batch of a rank-3 one.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        matmul(self, other)
    }

    /// Swaps the last two axes.
    pub fn transpose(&self) -> Result<Tensor> {
        transpose_last2(self)
    }
}

fn mat_dims(t: &Tensor) -> Option<(Option<usize>, usize, usize)> {
    match t.shape.as_slice() {
        [m, k] => Some((None, *m, *k)),
        [b, m, k] => Some((Some(*b), *m, *k)),
        _ => None,
    }
}

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mismatch = || Error::ShapeMismatch { op: "matmul", left: a.shape.clone(), right: b.shape.clone() };
    let (ba, m, k) = mat_dims(a).ok_or_else(mismatch)?;
    let (bb, k2, n) = mat_dims(b).ok_or_else(mismatch)?;
    if k != k2 {
        return Err(mismatch());
    }
    let batch = match (ba, bb) {
        (Some(x), Some(y)) if x != y => return Err(mismatch()),
        (Some(x), _) | (None, Some(x)) => Some(x),
        (None, None) => None,
    };
    let count = batch.unwrap_or(1);
    let mut out = vec![0.0; count * m * n];
    for t in 0..count {
        let ao = if ba.is_some() { t * m * k } else { 0 };
        let bo = if bb.is_some() { t * k * n } else { 0 };
        let oo = t * m * n;
        let bd = &b.data[bo..bo + k * n];
        for i in 0..m {
            let arow = &a.data[ao + i * k..ao + (i + 1) * k];
            let orow = &mut out[oo + i * n..oo + (i + 1) * n];
            for (p, &av) in arow.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let brow = &bd[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
    let shape = match batch {
        Some(bs) => vec![bs, m, n],
        None => vec![m, n],
    };
    Ok(Tensor { shape, data: out })
}

pub(crate) fn transpose_last2(a: &Tensor) -> Result<Tensor> {
    let (batch, m, n) = mat_dims(a).ok_or_else(|| Error::InvalidShape {
        shape: a.shape.clone(),
        reason: "transpose needs rank 2 or 3".into(),
    })?;
    let count = batch.unwrap_or(1);
    let mut out = vec![0.0; a.len()];
    for t in 0..count {
        let o = t * m * n;
        for i in 0..m {
            for j in 0..n {
                out[o + j * m + i] = a.data[o + i * n + j];
            }
        }
    }
    let shape = match batch {
        Some(bs) => vec![bs, n, m],
        None => vec![n, m],
    };
    Ok(Tensor { shape, data: out })
}

/// Sums over the leading axis: `[B, ...] -> [...]`.
pub(crate) fn sum_batch(a: &Tensor) -> Result<Tensor> {
    if a.rank() == 0 {
        return Err(Error::InvalidShape { shape: a.shape.clone(), reason: "sum_batch needs rank >= 1".into() });
    }
    let inner: Vec<usize> = a.shape[1..].to_vec();
    let width = numel(&inner);
    let mut out = vec![0.0; width];
    for chunk in a.data.chunks(width.max(1)) {
        for (o, v) in out.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    Ok(Tensor { shape: inner, data: out })
}

/// Repeats along a new leading axis: `[...] -> [B, ...]`.
pub(crate) fn broadcast_batch(a: &Tensor, batch: usize) -> Tensor {
    let mut shape = Vec::with_capacity(a.rank() + 1);
    shape.push(batch);
    shape.extend_from_slice(&a.shape);
    let mut data = Vec::with_capacity(batch * a.len());
    for _ in 0..batch {
        data.extend_from_slice(&a.data);
    }
    Tensor { shape, data }
}

fn last_dim(a: &Tensor) -> Result<usize> {
    a.shape.last().copied().ok_or_else(|| Error::InvalidShape {
        shape: a.shape.clone(),
        reason: "operation needs rank >= 1".into(),
    })
}

/// Selects columns of the last axis.
pub(crate) fn gather_last(a: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let w = last_dim(a)?;
    if let Some(&bad) = idx.iter().find(|&&i| i >= w) {
        return Err(Error::InvalidShape {
            shape: a.shape.clone(),
            reason: alloc::format!("gather index {bad} out of range for last axis {w}"),
        });
    }
    let rows = a.len().checked_div(w).unwrap_or(0);
    let mut data = Vec::with_capacity(rows * idx.len());
    for r in 0..rows {
        let row = &a.data[r * w..(r + 1) * w];
        data.extend(idx.iter().map(|&i| row[i]));
    }
    let mut shape = a.shape.clone();
    *shape.last_mut().unwrap() = idx.len();
    Ok(Tensor { shape, data })
}

/// Adjoint of [`gather_last`]: adds column `c` of `a` into column `idx[c]` of a
/// zero tensor whose last axis has `width` entries.
pub(crate) fn scatter_add_last(a: &Tensor, idx: &[usize], width: usize) -> Result<Tensor> {
    let w = last_dim(a)?;
    if w != idx.len() {
        return Err(Error::InvalidShape {
            shape: a.shape.clone(),
            reason: alloc::format!("scatter expects last axis {}, got {w}", idx.len()),
        });
    }
    if idx.iter().any(|&i| i >= width) {
        return Err(Error::invalid("scatter index out of range"));
    }
    let rows = a.len().checked_div(w).unwrap_or(0);
    let mut data = vec![0.0; rows * width];
    for r in 0..rows {
        for (c, &i) in idx.iter().enumerate() {
            data[r * width + i] += a.data[r * w + c];
        }
    }
    let mut shape = a.shape.clone();
    *shape.last_mut().unwrap() = width;
    Ok(Tensor { shape, data })
}

/// Concatenates along the last axis; all leading axes must agree.
pub(crate) fn concat_last(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| Error::invalid("concat of zero tensors"))?;
    let lead = &first.shape[..first.rank().saturating_sub(1)];
    for p in parts {
        if p.rank() != first.rank() || &p.shape[..p.rank() - 1] != lead {
            return Err(Error::ShapeMismatch { op: "concat", left: first.shape.clone(), right: p.shape.clone() });
        }
    }
    let widths: Vec<usize> = parts.iter().map(|p| *p.shape.last().unwrap()).collect();
    let total: usize = widths.iter().sum();
    let rows = numel(lead);
    let mut data = Vec::with_capacity(rows * total);
    for r in 0..rows {
        for (p, &w) in parts.iter().zip(&widths) {
            data.extend_from_slice(&p.data[r * w..(r + 1) * w]);
        }
    }
    let mut shape = lead.to_vec();
    shape.push(total);
    Ok(Tensor { shape, data })
}
