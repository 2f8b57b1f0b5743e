use alloc::vec::Vec;

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const TAYLOR_ORDER: usize = 14;
const SCALED_NORM: f64 = 0.5;

/// For an `n × n` symmetric matrix stored row-major, the index of each entry
/// in the packed upper triangle (row-major over `i ≤ j`).
pub fn sym_fill_indices(n: usize) -> Vec<usize> {
    let mut packed = alloc::vec![0usize; n * n];
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            packed[i * n + j] = k;
            packed[j * n + i] = k;
            k += 1;
        }
    }
    packed
}

/// Row-major positions of the diagonal followed by the strict lower triangle.
pub(crate) fn cholesky_positions(n: usize) -> Vec<usize> {
    let mut pos: Vec<usize> = (0..n).map(|i| i * n + i).collect();
    for i in 0..n {
        for j in 0..i {
            pos.push(i * n + j);
        }
    }
    pos
}

/// Matrix exponential of every matrix in a `[B, n, n]` batch, by scaling and
/// squaring of a truncated Taylor series. The scaling exponent is chosen from
/// the values (one for the whole batch) and is not differentiated.
pub fn expm_batched(x: &Var) -> Result<Var> {
    let shape = x.shape();
    let (batch, n) = match shape.as_slice() {
        [b, n, m] if n == m => (*b, *n),
        _ => return Err(Error::InvalidShape { shape, reason: "expm_batched needs [B, n, n]".into() }),
    };
    let v = x.value();
    let mut norm: f64 = 0.0;
    for b in 0..batch {
        let m = &v.data()[b * n * n..(b + 1) * n * n];
        for j in 0..n {
            norm = norm.max((0..n).map(|i| m[i * n + j].abs()).sum());
        }
    }
    if !norm.is_finite() {
        return Err(Error::NonFinite { op: "expm" });
    }
    let mut s = 0i32;
    while norm > SCALED_NORM * libm::ldexp(1.0, s) && s < 64 {
        s += 1;
    }
    let y = x.scale(libm::ldexp(1.0, -s));
    let eye = x.tape().constant(Tensor::eye(n)).broadcast_batch(batch);
    // Horner form of Σ_k Y^k / k!
    let mut e = eye.add(&y.scale(1.0 / TAYLOR_ORDER as f64))?;
    for k in (1..TAYLOR_ORDER).rev() {
        e = eye.add(&y.matmul(&e)?.scale(1.0 / k as f64))?;
    }
    for _ in 0..s {
        e = e.matmul(&e)?;
    }
    Ok(e)
}
