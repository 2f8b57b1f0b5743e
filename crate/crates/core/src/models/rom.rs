use alloc::vec;

use super::autoencoder::{AeConfig, Autoencoder};
use super::hamiltonian::{HamiltonianArch, HamiltonianConfig, ModelKind};
use super::{Bound, ParamSet, Parameterized};
use crate::autodiff::{grad, grad_graph, Tape, Var};
use crate::error::{Error, Result};
use crate::rng;
use crate::systems::{SystemSpec, VectorField};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RomConfig {
    /// Shared by the position and momentum autoencoders.
    pub ae: AeConfig,
    pub latent: HamiltonianConfig,
    pub seed: u64,
}

impl RomConfig {
    /// Latent GeoHNN sized from the autoencoder's latent dimension.
    pub fn new(ae: AeConfig, hidden: &[usize], seed: u64) -> Self {
        let r = *ae.dims.last().unwrap_or(&0);
        let latent = HamiltonianConfig::new(ModelKind::GeoHnn, r).with_hidden(hidden).with_seed(seed);
        RomConfig { ae, latent, seed }
    }
}

/// Dynamics on the latent phase space.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum LatentDynamics {
    Learned(HamiltonianArch),
    /// `Ȟ(q̌, p̌) = H(φ_Q(q̌), φ_P(p̌))` for a known full-order system.
    Pullback(SystemSpec),
}

/// Two autoencoders (positions and momenta) and a latent Hamiltonian.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReducedOrderModel {
    ae_q: Autoencoder,
    ae_p: Autoencoder,
    latent: LatentDynamics,
    params: ParamSet,
    /// `None` for a pullback model.
    config: Option<RomConfig>,
}

impl ReducedOrderModel {
    pub fn new(cfg: &RomConfig) -> Result<Self> {
        let mut params = ParamSet::new();
        let mut r = rng::stream(cfg.seed, 1);
        let ae_q = Autoencoder::build(&cfg.ae, &mut params, "ae_q", &mut r)?;
        let ae_p = Autoencoder::build(&cfg.ae, &mut params, "ae_p", &mut r)?;
        if cfg.latent.dof != ae_q.r() {
            return Err(Error::invalid(alloc::format!(
                "latent model has {} dof, autoencoder latent dimension is {}",
                cfg.latent.dof,
                ae_q.r()
            )));
        }
        let arch = HamiltonianArch::build(&cfg.latent, &mut params, "latent.", &mut r)?;
        Ok(ReducedOrderModel { ae_q, ae_p, latent: LatentDynamics::Learned(arch), params, config: Some(cfg.clone()) })
    }

    /// Autoencoders reducing a known system, with no learned dynamics.
    pub fn pullback(ae: &AeConfig, system: SystemSpec, seed: u64) -> Result<Self> {
        let mut params = ParamSet::new();
        let mut r = rng::stream(seed, 1);
        let ae_q = Autoencoder::build(ae, &mut params, "ae_q", &mut r)?;
        let ae_p = Autoencoder::build(ae, &mut params, "ae_p", &mut r)?;
        if system.dof() != ae_q.n() {
            return Err(Error::invalid("system dof differs from the autoencoder input dimension"));
        }
        Ok(ReducedOrderModel { ae_q, ae_p, latent: LatentDynamics::Pullback(system), params, config: None })
    }

    pub fn config(&self) -> Option<&RomConfig> {
        self.config.as_ref()
    }

    pub fn ae_q(&self) -> &Autoencoder {
        &self.ae_q
    }

    pub fn ae_p(&self) -> &Autoencoder {
        &self.ae_p
    }

    pub fn latent(&self) -> &LatentDynamics {
        &self.latent
    }

    pub fn full_dim(&self) -> usize {
        self.ae_q.n()
    }

    pub fn latent_dim(&self) -> usize {
        self.ae_q.r()
    }

    /// Sets the outer decoder offsets, typically to the training means.
    pub fn set_data_means(&mut self, q_mean: &Tensor, p_mean: &Tensor) -> Result<()> {
        self.ae_q.set_outer_bias(&mut self.params, q_mean)?;
        self.ae_p.set_outer_bias(&mut self.params, p_mean)
    }

    pub fn encode(&self, b: &Bound, q: &Var, p: &Var) -> Result<(Var, Var)> {
        Ok((self.ae_q.encode(b, q)?, self.ae_p.encode(b, p)?))
    }

    pub fn decode(&self, b: &Bound, qc: &Var, pc: &Var) -> Result<(Var, Var)> {
        Ok((self.ae_q.decode(b, qc)?, self.ae_p.decode(b, pc)?))
    }

    /// `Ȟ` per sample, `[B, 1]`.
    pub fn latent_energy(&self, b: &Bound, qc: &Var, pc: &Var) -> Result<Var> {
        match &self.latent {
            LatentDynamics::Learned(arch) => arch.energy(b, qc, pc),
            LatentDynamics::Pullback(sys) => {
                let (q, p) = self.decode(b, qc, pc)?;
                sys.energy_var(&q, &p)
            }
        }
    }

    /// Hamilton's equations for `Ȟ`, recorded for second-order use.
    pub fn latent_field(&self, b: &Bound, qc: &Var, pc: &Var) -> Result<(Var, Var)> {
        match &self.latent {
            LatentDynamics::Learned(arch) => arch.vector_field(b, qc, pc),
            LatentDynamics::Pullback(_) => {
                let h = self.latent_energy(b, qc, pc)?.sum();
                let g = grad_graph(&h, &[qc, pc])?;
                Ok((g[1].clone(), g[0].neg()))
            }
        }
    }

    fn eval_tape(&self) -> (Tape, Bound) {
        let tape = Tape::unchecked();
        let b = self.params.bind(&tape, false);
        (tape, b)
    }

    fn batched(x: &Tensor, n: usize) -> Result<Tensor> {
        match x.shape() {
            [m] if *m == n => x.reshape(&[1, n]),
            [_, m] if *m == n => Ok(x.clone()),
            s => Err(Error::ShapeMismatch { op: "rom input", left: s.to_vec(), right: vec![n] }),
        }
    }

    /// Full-order `[B, n]` states to latent `[B, r]` ones.
    pub fn encode_states(&self, q: &Tensor, p: &Tensor) -> Result<(Tensor, Tensor)> {
        let (tape, b) = self.eval_tape();
        let n = self.full_dim();
        let (qc, pc) =
            self.encode(&b, &tape.constant(Self::batched(q, n)?), &tape.constant(Self::batched(p, n)?))?;
        Ok(((*qc.value()).clone(), (*pc.value()).clone()))
    }

    pub fn decode_states(&self, qc: &Tensor, pc: &Tensor) -> Result<(Tensor, Tensor)> {
        let (tape, b) = self.eval_tape();
        let r = self.latent_dim();
        let (q, p) =
            self.decode(&b, &tape.constant(Self::batched(qc, r)?), &tape.constant(Self::batched(pc, r)?))?;
        Ok(((*q.value()).clone(), (*p.value()).clone()))
    }

    /// Latent vector field at `(q̌, p̌)`.
    pub fn reduced_time_derivatives(&self, qc: &Tensor, pc: &Tensor) -> Result<(Tensor, Tensor)> {
        let (tape, b) = self.eval_tape();
        let r = self.latent_dim();
        let shape = qc.shape().to_vec();
        let qv = tape.var(Self::batched(qc, r)?);
        let pv = tape.var(Self::batched(pc, r)?);
        let h = self.latent_energy(&b, &qv, &pv)?.sum();
        let g = grad(&h, &[&qv, &pv])?;
        Ok((g[1].reshape(&shape)?, g[0].scale(-1.0).reshape(&shape)?))
    }
}

/// The latent system, `dof = r`.
impl VectorField for ReducedOrderModel {
    fn dof(&self) -> usize {
        self.latent_dim()
    }

    fn energies(&self, qc: &Tensor, pc: &Tensor) -> Result<Tensor> {
        let (tape, b) = self.eval_tape();
        let r = self.latent_dim();
        let (qc, pc) = (Self::batched(qc, r)?, Self::batched(pc, r)?);
        let batch = qc.rows();
        let e = self.latent_energy(&b, &tape.constant(qc), &tape.constant(pc))?;
        e.value().reshape(&[batch])
    }

    fn time_derivatives(&self, qc: &Tensor, pc: &Tensor) -> Result<(Tensor, Tensor)> {
        self.reduced_time_derivatives(qc, pc)
    }
}

impl Parameterized for ReducedOrderModel {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}
