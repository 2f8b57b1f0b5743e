use alloc::vec::Vec;

use super::{grad, Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

const STEP: f64 = 1e-4;

fn eval_at(f: &impl Fn(&Var) -> Result<Var>, x: &Tensor) -> Result<f64> {
    let tape = Tape::unchecked();
    let v = tape.var(x.clone());
    Ok(f(&v)?.item())
}

/// Central finite differences of a scalar function, step `h`.
pub fn central_difference(f: impl Fn(&Var) -> Result<Var>, x: &Tensor, h: f64) -> Result<Tensor> {
    let mut out = Vec::with_capacity(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = eval_at(&f, &probe)?;
        probe.data_mut()[i] = orig - h;
        let down = eval_at(&f, &probe)?;
        probe.data_mut()[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Tensor::new(x.shape(), out)
}

/// Fourth-order central differences (five-point stencil), step `h`.
pub fn central_difference4(f: impl Fn(&Var) -> Result<Var>, x: &Tensor, h: f64) -> Result<Tensor> {
    let mut out = Vec::with_capacity(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        let mut at = |d: f64| -> Result<f64> {
            probe.data_mut()[i] = orig + d;
            eval_at(&f, &probe)
        };
        let (p1, m1, p2, m2) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?);
        probe.data_mut()[i] = orig;
        out.push((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h));
    }
    Tensor::new(x.shape(), out)
}

/// `max_i |analytic_i − numeric_i| / (|analytic_i| + eps)`, with the numeric
/// gradient from [`central_difference4`].
///
/// `f` receives a fresh leaf on a fresh tape for every evaluation.
pub fn check_grad(f: impl Fn(&Var) -> Result<Var>, x: &Tensor, eps: f64) -> Result<f64> {
    let tape = Tape::new();
    let v = tape.var(x.clone());
    let out = f(&v)?;
    let analytic = grad(&out, &[&v])?.remove(0);
    let numeric = central_difference4(&f, x, STEP)?;
    Ok(analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / (a.abs() + eps))
        .fold(0.0, f64::max))
}
