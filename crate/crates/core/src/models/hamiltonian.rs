use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::matfn::{cholesky_positions, expm_batched, sym_fill_indices};
use super::mlp::{Activation, Mlp};
use super::{Bound, ParamSet, Parameterized};
use crate::autodiff::{concat, grad, grad_graph, Tape, Var};
use crate::error::{Error, Result};
use crate::manifolds::{ParamValue, SpdPoint};
use crate::rng;
use crate::systems::VectorField;
use crate::tensor::Tensor;

/// Diagonal shift of the symmetrized double-head inertia.
pub const DOUBLE_HEAD_EPS: f64 = 1e-4;
/// Added to the softplus diagonal of the Cholesky factor.
pub const CHOLESKY_FLOOR: f64 = 1e-6;
/// Output-layer scale of inertia heads, so that every structured model starts
/// close to unit inertia.
const INERTIA_INIT_SCALE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    BaselineMlp,
    VanillaHnn,
    DoubleHeadHnn,
    CholeskyHnn,
    GeoHnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] =
        [ModelKind::BaselineMlp, ModelKind::VanillaHnn, ModelKind::DoubleHeadHnn, ModelKind::CholeskyHnn, ModelKind::GeoHnn];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::BaselineMlp => "baseline-mlp",
            ModelKind::VanillaHnn => "vanilla-hnn",
            ModelKind::DoubleHeadHnn => "double-head-hnn",
            ModelKind::CholeskyHnn => "cholesky-hnn",
            ModelKind::GeoHnn => "geo-hnn",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn has_hamiltonian(self) -> bool {
        self != ModelKind::BaselineMlp
    }

    pub fn has_inertia(self) -> bool {
        matches!(self, ModelKind::DoubleHeadHnn | ModelKind::CholeskyHnn | ModelKind::GeoHnn)
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct HamiltonianConfig {
    pub kind: ModelKind,
    pub dof: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Only used by the double-head model.
    pub eps_sym: f64,
    pub seed: u64,
}

impl HamiltonianConfig {
    pub fn new(kind: ModelKind, dof: usize) -> Self {
        HamiltonianConfig { kind, dof, hidden: vec![128, 128], activation: Activation::Tanh, eps_sym: DOUBLE_HEAD_EPS, seed: 0 }
    }

    pub fn with_hidden(mut self, hidden: &[usize]) -> Self {
        self.hidden = hidden.to_vec();
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn widths(&self, input: usize, output: usize) -> Vec<usize> {
        let mut w = vec![input];
        w.extend_from_slice(&self.hidden);
        w.push(output);
        w
    }
}

/// Network layout of one of the five model families. Holds indices into a
/// [`ParamSet`].
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HamiltonianArch {
    cfg: HamiltonianConfig,
    /// `(q,p) ↦ (q̇,ṗ)` for the baseline, `(q,p) ↦ H` for the vanilla HNN.
    net: Option<Mlp>,
    potential: Option<Mlp>,
    inertia: Option<Mlp>,
    m0: Option<usize>,
}

impl HamiltonianArch {
    pub fn build(cfg: &HamiltonianConfig, set: &mut ParamSet, prefix: &str, rng: &mut impl Rng) -> Result<Self> {
        let n = cfg.dof;
        if n == 0 {
            return Err(Error::invalid("model dof must be positive"));
        }
        let name = |s: &str| alloc::format!("{prefix}{s}");
        let mut arch = HamiltonianArch { cfg: cfg.clone(), net: None, potential: None, inertia: None, m0: None };
        match cfg.kind {
            ModelKind::BaselineMlp => {
                arch.net = Some(Mlp::new(set, &name("net"), &cfg.widths(2 * n, 2 * n), cfg.activation, 1.0, rng)?);
            }
            ModelKind::VanillaHnn => {
                arch.net = Some(Mlp::new(set, &name("net"), &cfg.widths(2 * n, 1), cfg.activation, 1.0, rng)?);
            }
            kind => {
                arch.potential = Some(Mlp::new(set, &name("potential"), &cfg.widths(n, 1), cfg.activation, 1.0, rng)?);
                let head = if kind == ModelKind::DoubleHeadHnn { n * n } else { n * (n + 1) / 2 };
                arch.inertia =
                    Some(Mlp::new(set, &name("inertia"), &cfg.widths(n, head), cfg.activation, INERTIA_INIT_SCALE, rng)?);
                if kind == ModelKind::GeoHnn {
                    arch.m0 = Some(set.push(name("m0"), ParamValue::Spd(SpdPoint::identity(n))));
                }
            }
        }
        Ok(arch)
    }

    pub fn config(&self) -> &HamiltonianConfig {
        &self.cfg
    }

    pub fn kind(&self) -> ModelKind {
        self.cfg.kind
    }

    pub fn dof(&self) -> usize {
        self.cfg.dof
    }

    pub fn potential_net(&self) -> Option<&Mlp> {
        self.potential.as_ref()
    }

    pub fn inertia_net(&self) -> Option<&Mlp> {
        self.inertia.as_ref()
    }

    pub fn m0_index(&self) -> Option<usize> {
        self.m0
    }

    fn unsupported(&self, what: &'static str) -> Error {
        Error::Unsupported { kind: self.cfg.kind.name(), what }
    }

    /// `M(q)⁻¹` for every row of `q: [B, n]`, as `[B, n, n]`.
    pub fn inverse_mass(&self, b: &Bound, q: &Var) -> Result<Var> {
        let n = self.cfg.dof;
        let batch = q.shape()[0];
        let head = self.inertia.as_ref().ok_or_else(|| self.unsupported("inertia matrix"))?.forward(b, q)?;
        let tape = q.tape();
        match self.cfg.kind {
            ModelKind::DoubleHeadHnn => {
                // A = I + N(q),  M⁻¹ = ½(A + Aᵀ) + εI
                let nm = head.reshape(&[batch, n, n])?;
                let s = nm.add(&nm.transpose()?)?.scale(0.5);
                let shift = tape.constant(Tensor::eye(n).scale(1.0 + self.cfg.eps_sym)).broadcast_batch(batch);
                s.add(&shift)
            }
            ModelKind::CholeskyHnn => {
                // diag(L) = softplus(raw + ln(e−1)) + floor, so raw = 0 gives L = I
                let shift = libm::log(core::f64::consts::E - 1.0);
                let diag = head.slice(0, n)?.add_scalar(shift).softplus().add_scalar(CHOLESKY_FLOOR);
                let packed = if n > 1 { concat(&[&diag, &head.slice(n, n * (n - 1) / 2)?])? } else { diag };
                let l = packed.scatter_add(&cholesky_positions(n), n * n)?.reshape(&[batch, n, n])?;
                l.matmul(&l.transpose()?)
            }
            ModelKind::GeoHnn => {
                // Exp_{M₀}(Ξ) = M₀ exp(M₀⁻¹ Ξ)
                let xi = head.gather(&sym_fill_indices(n))?.reshape(&[batch, n, n])?;
                let m0 = b.get(self.m0.expect("geo model has m0"));
                let e = expm_batched(&m0.inverse()?.matmul(&xi)?)?;
                let y = m0.matmul(&e)?;
                Ok(y.add(&y.transpose()?)?.scale(0.5))
            }
            _ => Err(self.unsupported("inertia matrix")),
        }
    }

    /// Per-sample energies `[B, 1]`.
    pub fn energy(&self, b: &Bound, q: &Var, p: &Var) -> Result<Var> {
        match self.cfg.kind {
            ModelKind::BaselineMlp => Err(self.unsupported("Hamiltonian")),
            ModelKind::VanillaHnn => self.net.as_ref().expect("vanilla net").forward(b, &concat(&[q, p])?),
            _ => {
                let n = self.cfg.dof;
                let batch = q.shape()[0];
                let v = self.potential.as_ref().expect("potential net").forward(b, q)?;
                let minv = self.inverse_mass(b, q)?;
                let k = p.reshape(&[batch, 1, n])?.matmul(&minv)?.matmul(&p.reshape(&[batch, n, 1])?)?;
                v.add(&k.reshape(&[batch, 1])?.scale(0.5))
            }
        }
    }

    /// `(q̇, ṗ)` for `q, p: [B, n]`. Hamiltonian models differentiate their
    /// energy with a recorded backward pass, so the result can be
    /// differentiated again with respect to the parameters.
    pub fn vector_field(&self, b: &Bound, q: &Var, p: &Var) -> Result<(Var, Var)> {
        let n = self.cfg.dof;
        if self.cfg.kind == ModelKind::BaselineMlp {
            let out = self.net.as_ref().expect("mlp net").forward(b, &concat(&[q, p])?)?;
            return Ok((out.slice(0, n)?, out.slice(n, n)?));
        }
        let h = self.energy(b, q, p)?.sum();
        let mut g = grad_graph(&h, &[q, p])?;
        let dp = g.pop().expect("two gradients");
        let dq = g.pop().expect("two gradients");
        Ok((dp, dq.neg()))
    }
}

/// A standalone low-dimensional model: architecture plus parameters.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HamiltonianModel {
    arch: HamiltonianArch,
    params: ParamSet,
}

impl HamiltonianModel {
    pub fn new(cfg: &HamiltonianConfig) -> Result<Self> {
        let mut params = ParamSet::new();
        let mut r = rng::stream(cfg.seed, 0);
        let arch = HamiltonianArch::build(cfg, &mut params, "", &mut r)?;
        Ok(HamiltonianModel { arch, params })
    }

    pub fn arch(&self) -> &HamiltonianArch {
        &self.arch
    }

    pub fn config(&self) -> &HamiltonianConfig {
        self.arch.config()
    }

    pub fn kind(&self) -> ModelKind {
        self.arch.kind()
    }

    pub fn eps_sym_mut(&mut self) -> &mut f64 {
        &mut self.arch.cfg.eps_sym
    }

    fn eval_tape(&self) -> (Tape, Bound) {
        let tape = Tape::unchecked();
        let b = self.params.bind(&tape, false);
        (tape, b)
    }

    fn batched(&self, x: &Tensor) -> Result<Tensor> {
        let n = self.arch.dof();
        match x.shape() {
            [m] if *m == n => x.reshape(&[1, n]),
            [_, m] if *m == n => Ok(x.clone()),
            s => Err(Error::ShapeMismatch { op: "model input", left: s.to_vec(), right: vec![n] }),
        }
    }

    /// `H(q, p)` for a single state.
    pub fn hamiltonian_eval(&self, q: &[f64], p: &[f64]) -> Result<f64> {
        Ok(self.energies(&Tensor::vector(q), &Tensor::vector(p))?.data()[0])
    }

    /// `M(q)⁻¹` for `q: [B, n]` or `[n]`.
    pub fn inverse_mass_at(&self, q: &Tensor) -> Result<Tensor> {
        let (tape, b) = self.eval_tape();
        let qv = tape.constant(self.batched(q)?);
        Ok((*self.arch.inverse_mass(&b, &qv)?.value()).clone())
    }
}

impl VectorField for HamiltonianModel {
    fn dof(&self) -> usize {
        self.arch.dof()
    }

    fn energies(&self, q: &Tensor, p: &Tensor) -> Result<Tensor> {
        let (tape, b) = self.eval_tape();
        let (q, p) = (self.batched(q)?, self.batched(p)?);
        let batch = q.rows();
        let e = self.arch.energy(&b, &tape.constant(q), &tape.constant(p))?;
        e.value().reshape(&[batch])
    }

    fn time_derivatives(&self, q: &Tensor, p: &Tensor) -> Result<(Tensor, Tensor)> {
        let (tape, b) = self.eval_tape();
        let (q0, p0) = (self.batched(q)?, self.batched(p)?);
        let shape = q.shape().to_vec();
        let (qv, pv) = (tape.var(q0), tape.var(p0));
        let (qdot, pdot) = if self.kind() == ModelKind::BaselineMlp {
            let (a, c) = self.arch.vector_field(&b, &qv, &pv)?;
            ((*a.value()).clone(), (*c.value()).clone())
        } else {
            let h = self.arch.energy(&b, &qv, &pv)?.sum();
            let mut g = grad(&h, &[&qv, &pv])?;
            let dp = g.pop().expect("two gradients");
            (dp, g.pop().expect("two gradients").scale(-1.0))
        };
        Ok((qdot.reshape(&shape)?, pdot.reshape(&shape)?))
    }
}

impl Parameterized for HamiltonianModel {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}
