//! Adam for Euclidean, SPD and biorthogonal parameters.
//!
//! * Euclidean: Adam with decoupled weight decay.
//! * SPD: moments live in the tangent space. The Euclidean gradient is turned
//!   into the Riemannian one, the step is taken with the exponential map and
//!   the first moment is transported to the new point. The second moment is
//!   an elementwise magnitude estimate and is carried over unchanged.
//! * Biorthogonal: Euclidean Adam on `Φ` and `Ψ`, then [`biorth_retract`].
//!
//! Weight decay only touches Euclidean parameters.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::biorth::{biorth_retract, biorth_tangent_projection, BiorthogonalPair};
use super::spd::{spd_retract, spd_riemannian_grad, spd_vector_transport, SpdPoint, SymTangent};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum ParamValue {
    Euclidean(Tensor),
    Spd(SpdPoint),
    Biorthogonal(BiorthogonalPair),
}

impl ParamValue {
    pub fn kind(&self) -> &'static str {
        match self {
            ParamValue::Euclidean(_) => "euclidean",
            ParamValue::Spd(_) => "spd",
            ParamValue::Biorthogonal(_) => "biorthogonal",
        }
    }

    /// The raw tensors, in the order gradients are expected.
    pub fn tensors(&self) -> Vec<&Tensor> {
        match self {
            ParamValue::Euclidean(t) => vec![t],
            ParamValue::Spd(m) => vec![m.mat()],
            ParamValue::Biorthogonal(p) => vec![p.phi(), p.psi()],
        }
    }
}

/// A parameter together with its optimizer slots.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ManifoldParam {
    pub name: String,
    pub value: ParamValue,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl ManifoldParam {
    pub fn new(name: impl Into<String>, value: ParamValue) -> Self {
        let m: Vec<Tensor> = value.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        ManifoldParam { name: name.into(), v: m.clone(), m, value, step: 0 }
    }

    pub fn euclidean(name: impl Into<String>, t: Tensor) -> Self {
        Self::new(name, ParamValue::Euclidean(t))
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.value.tensors()
    }

    pub fn num_scalars(&self) -> usize {
        match &self.value {
            ParamValue::Biorthogonal(p) => 2 * p.phi().len(),
            other => other.tensors()[0].len(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    /// Drops the optimizer state.
    pub fn reset_state(&mut self) {
        *self = Self::new(core::mem::take(&mut self.name), self.value.clone());
    }

    /// Manifold membership: `‖ΨᵀΦ − I‖_F ≤ tol` or a positive spectrum.
    pub fn check(&self, biorth_tol: f64) -> Result<()> {
        match &self.value {
            ParamValue::Euclidean(t) => t.check_finite("parameter"),
            ParamValue::Spd(m) => {
                let e = m.min_eigenvalue();
                if e > 0.0 {
                    Ok(())
                } else {
                    Err(Error::NotSpd(alloc::format!("{}: min eigenvalue {e:e}", self.name)))
                }
            }
            ParamValue::Biorthogonal(p) => {
                let r = p.residual();
                if r <= biorth_tol {
                    Ok(())
                } else {
                    Err(Error::invalid(alloc::format!("{}: biorthogonality residual {r:e}", self.name)))
                }
            }
        }
    }
}

fn moments(m: &mut Tensor, v: &mut Tensor, g: &Tensor, h: &AdamHyper) {
    for ((mi, vi), gi) in m.data_mut().iter_mut().zip(v.data_mut().iter_mut()).zip(g.data()) {
        *mi = h.beta1 * *mi + (1.0 - h.beta1) * gi;
        *vi = h.beta2 * *vi + (1.0 - h.beta2) * gi * gi;
    }
}

fn direction(m: &Tensor, v: &Tensor, h: &AdamHyper, t: u64) -> Tensor {
    let c1 = 1.0 - libm::pow(h.beta1, t as f64);
    let c2 = 1.0 - libm::pow(h.beta2, t as f64);
    m.zip_with(v, "adam", |mi, vi| -h.lr * (mi / c1) / (libm::sqrt(vi / c2) + h.eps)).expect("slot shapes agree")
}

fn check_grads(param: &ManifoldParam, grads: &[Tensor]) -> Result<()> {
    let ts = param.tensors();
    if ts.len() != grads.len() {
        return Err(Error::invalid(alloc::format!(
            "{}: expected {} gradient tensors, got {}",
            param.name,
            ts.len(),
            grads.len()
        )));
    }
    for (t, g) in ts.iter().zip(grads) {
        if t.shape() != g.shape() {
            return Err(Error::ShapeMismatch { op: "riemannian_adam_step", left: t.shape().to_vec(), right: g.shape().to_vec() });
        }
    }
    Ok(())
}

/// One optimizer step. `grads` are Euclidean gradients aligned with
/// [`ManifoldParam::tensors`]. On error the parameter and its slots are left
/// untouched.
pub fn riemannian_adam_step(param: &mut ManifoldParam, grads: &[Tensor], hyper: &AdamHyper) -> Result<()> {
    check_grads(param, grads)?;
    let t = param.step + 1;
    let (mut m, mut v) = (param.m.clone(), param.v.clone());
    let value = match &param.value {
        ParamValue::Euclidean(x) => {
            moments(&mut m[0], &mut v[0], &grads[0], hyper);
            let d = direction(&m[0], &v[0], hyper, t);
            let decay = 1.0 - hyper.lr * hyper.weight_decay;
            ParamValue::Euclidean(x.zip_with(&d, "adam", |xi, di| xi * decay + di)?)
        }
        ParamValue::Spd(point) => {
            let rg = spd_riemannian_grad(point, &grads[0])?.into_mat();
            moments(&mut m[0], &mut v[0], &rg, hyper);
            let d = SymTangent::from_symmetrized(&direction(&m[0], &v[0], hyper, t))?;
            let next = spd_retract(point, &d)?;
            m[0] = spd_vector_transport(point, &next, &SymTangent::from_symmetrized(&m[0])?)?.into_mat();
            ParamValue::Spd(next)
        }
        ParamValue::Biorthogonal(pair) => {
            let (gp, gs) = biorth_tangent_projection(pair, &grads[0], &grads[1])?;
            let g = [gp, gs];
            let mut raw = [pair.phi().clone(), pair.psi().clone()];
            for k in 0..2 {
                moments(&mut m[k], &mut v[k], &g[k], hyper);
                raw[k] = raw[k].add(&direction(&m[k], &v[k], hyper, t))?;
            }
            ParamValue::Biorthogonal(biorth_retract(&raw[0], &raw[1])?)
        }
    };
    param.value = value;
    param.m = m;
    param.v = v;
    param.step = t;
    Ok(())
}
