use alloc::vec::Vec;

use crate::autodiff::{grad_graph, Var};
use crate::error::{Error, Result};
use crate::models::{Bound, HamiltonianArch, ModelKind, ParamSet, ReducedOrderModel};
use crate::systems::VectorField;
use crate::tensor::Tensor;

/// The two halves of a vector field on a tape, evaluated separately so that
/// a split integrator only differentiates what it uses.
pub trait SplitField {
    fn qdot(&self, b: &Bound, q: &Var, p: &Var) -> Result<Var>;
    fn pdot(&self, b: &Bound, q: &Var, p: &Var) -> Result<Var>;
}

impl SplitField for HamiltonianArch {
    fn qdot(&self, b: &Bound, q: &Var, p: &Var) -> Result<Var> {
        if self.kind() == ModelKind::BaselineMlp {
            return Ok(self.vector_field(b, q, p)?.0);
        }
        let h = self.energy(b, q, p)?.sum();
        Ok(grad_graph(&h, &[p])?.remove(0))
    }

    fn pdot(&self, b: &Bound, q: &Var, p: &Var) -> Result<Var> {
        if self.kind() == ModelKind::BaselineMlp {
            return Ok(self.vector_field(b, q, p)?.1);
        }
        let h = self.energy(b, q, p)?.sum();
        Ok(grad_graph(&h, &[q])?.remove(0).neg())
    }
}

/// The latent field of a reduced-order model.
impl SplitField for ReducedOrderModel {
    fn qdot(&self, b: &Bound, q: &Var, p: &Var) -> Result<Var> {
        let h = self.latent_energy(b, q, p)?.sum();
        Ok(grad_graph(&h, &[p])?.remove(0))
    }

    fn pdot(&self, b: &Bound, q: &Var, p: &Var) -> Result<Var> {
        let h = self.latent_energy(b, q, p)?.sum();
        Ok(grad_graph(&h, &[q])?.remove(0).neg())
    }
}

/// `p' = p + Δt ṗ(q, p)`, then `q' = q + Δt q̇(q, p')`, recorded on the tape.
pub fn symplectic_euler_var(f: &impl SplitField, b: &Bound, q: &Var, p: &Var, dt: f64) -> Result<(Var, Var)> {
    let p1 = p.add(&f.pdot(b, q, p)?.scale(dt))?;
    let q1 = q.add(&f.qdot(b, q, &p1)?.scale(dt))?;
    Ok((q1, p1))
}

/// Numeric symplectic Euler step for any field.
pub fn symplectic_euler_step(f: &impl VectorField, q: &Tensor, p: &Tensor, dt: f64) -> Result<(Tensor, Tensor)> {
    if !(dt > 0.0) {
        return Err(Error::invalid("symplectic Euler needs Δt > 0"));
    }
    let (_, pdot) = f.time_derivatives(q, p)?;
    let p1 = p.add(&pdot.scale(dt))?;
    let (qdot, _) = f.time_derivatives(q, &p1)?;
    let q1 = q.add(&qdot.scale(dt))?;
    if !q1.is_finite() || !p1.is_finite() {
        return Err(Error::NonFinite { op: "symplectic euler" });
    }
    Ok((q1, p1))
}

/// `Σ (a − b)²`.
pub fn sq_error(a: &Var, b: &Var) -> Result<Var> {
    Ok(a.sub(b)?.square().sum())
}

/// `Σ ‖q̇̃ − q̇‖² + ‖ṗ̃ − ṗ‖²` averaged over the batch.
pub fn derivative_mse(qdot: &Var, pdot: &Var, qdot_true: &Var, pdot_true: &Var) -> Result<Var> {
    let batch = qdot.shape()[0] as f64;
    Ok(sq_error(qdot, qdot_true)?.add(&sq_error(pdot, pdot_true)?)?.scale(1.0 / batch))
}

pub fn loss_derivative_matching(arch: &HamiltonianArch, b: &Bound, batch: [&Var; 4]) -> Result<Var> {
    let [q, p, qdot_true, pdot_true] = batch;
    let (qdot, pdot) = arch.vector_field(b, q, p)?;
    derivative_mse(&qdot, &pdot, qdot_true, pdot_true)
}

/// `λ Σ ‖θ‖²` over the Euclidean parameters.
pub fn loss_reg(set: &ParamSet, b: &Bound, lambda: f64) -> Option<Var> {
    if lambda == 0.0 {
        return None;
    }
    b.euclidean_sq_norm(set).map(|v| v.scale(lambda))
}

/// The three data terms of the reduced-order objective, batch-averaged.
pub struct RomTerms {
    pub multistep: Var,
    pub latent: Var,
    pub recon: Var,
}

/// One latent rollout from the encoded first state of each window, shared by
/// the multistep and latent terms. `q[j], p[j]` are the stored states
/// `j = 0..=N`.
pub fn rom_terms(rom: &ReducedOrderModel, b: &Bound, q: &[Var], p: &[Var], dt: f64) -> Result<RomTerms> {
    if q.len() < 2 || q.len() != p.len() {
        return Err(Error::invalid("a window needs at least two states"));
    }
    let batch = q[0].shape()[0] as f64;
    let encoded = q.iter().zip(p).map(|(q, p)| rom.encode(b, q, p)).collect::<Result<Vec<_>>>()?;
    let add = |acc: Option<Var>, x: Var| -> Result<Option<Var>> {
        Ok(Some(match acc {
            None => x,
            Some(a) => a.add(&x)?,
        }))
    };
    let mut recon = None;
    for (j, (qc, pc)) in encoded.iter().enumerate() {
        let (qr, pr) = rom.decode(b, qc, pc)?;
        recon = add(recon, sq_error(&qr, &q[j])?.add(&sq_error(&pr, &p[j])?)?)?;
    }
    let (mut qc, mut pc) = encoded[0].clone();
    let (mut multistep, mut latent) = (None, None);
    for j in 1..q.len() {
        (qc, pc) = symplectic_euler_var(rom, b, &qc, &pc, dt)?;
        latent = add(latent, sq_error(&qc, &encoded[j].0)?.add(&sq_error(&pc, &encoded[j].1)?)?)?;
        let (qd, pd) = rom.decode(b, &qc, &pc)?;
        multistep = add(multistep, sq_error(&qd, &q[j])?.add(&sq_error(&pd, &p[j])?)?)?;
    }
    let scale = |v: Option<Var>| v.expect("at least one step").scale(1.0 / batch);
    Ok(RomTerms { multistep: scale(multistep), latent: scale(latent), recon: scale(recon) })
}
