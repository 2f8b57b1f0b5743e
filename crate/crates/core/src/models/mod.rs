//! Learnable dynamics models.
//!
//! Parameters live in a [`ParamSet`]; architectures only hold indices into
//! it. Evaluating a model means binding the set to a tape ([`ParamSet::bind`])
//! and running the architecture on the bound variables. This keeps the
//! reduced-order model (two autoencoders plus a latent Hamiltonian network)
//! a single flat parameter list for the optimizer and for checkpoints.

mod activation;
mod autoencoder;
mod hamiltonian;
mod matfn;
mod mlp;
mod rom;

use alloc::string::String;
use alloc::vec::Vec;

pub use activation::InvertibleActivation;
pub use autoencoder::{AeConfig, AeKind, Autoencoder, ConstrainedAutoencoder, VanillaAutoencoder};
pub use hamiltonian::{HamiltonianArch, HamiltonianConfig, HamiltonianModel, ModelKind, CHOLESKY_FLOOR, DOUBLE_HEAD_EPS};
pub use matfn::{expm_batched, sym_fill_indices};
pub use mlp::{Activation, Mlp};
pub use rom::{LatentDynamics, ReducedOrderModel, RomConfig};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::manifolds::{ManifoldParam, ParamValue};
use crate::tensor::Tensor;

/// Flat, ordered list of named parameters.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamSet {
    params: Vec<ManifoldParam>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: ParamValue) -> usize {
        self.params.push(ManifoldParam::new(name, value));
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, i: usize) -> &ManifoldParam {
        &self.params[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut ManifoldParam {
        &mut self.params[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ManifoldParam> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ManifoldParam> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.num_scalars()).sum()
    }

    pub fn has_manifold_params(&self) -> bool {
        self.params.iter().any(|p| !matches!(p.value, ParamValue::Euclidean(_)))
    }

    /// Puts every parameter tensor on `tape`: as tracked leaves when
    /// `tracked`, as constants otherwise.
    pub fn bind(&self, tape: &Tape, tracked: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| {
                p.tensors()
                    .into_iter()
                    .map(|t| if tracked { tape.var(t.clone()) } else { tape.constant(t.clone()) })
                    .collect()
            })
            .collect();
        Bound { vars }
    }

    /// Replaces a parameter's value, keeping optimizer state shape-compatible.
    pub fn set_value(&mut self, i: usize, value: ParamValue) -> Result<()> {
        let old = &self.params[i];
        let same = old.value.kind() == value.kind()
            && old.tensors().iter().zip(value.tensors()).all(|(a, b)| a.shape() == b.shape());
        if !same {
            return Err(Error::invalid(alloc::format!("incompatible value for parameter {}", old.name)));
        }
        let name = old.name.clone();
        self.params[i] = ManifoldParam::new(name, value);
        Ok(())
    }

    /// `Σ ‖θ‖²` over Euclidean parameters.
    pub fn euclidean_sq_norm(&self) -> f64 {
        self.params
            .iter()
            .filter_map(|p| match &p.value {
                ParamValue::Euclidean(t) => Some(t.data().iter().map(|x| x * x).sum::<f64>()),
                _ => None,
            })
            .sum()
    }

    /// Copies of every parameter tensor, grouped per parameter.
    pub fn tensors(&self) -> Vec<Vec<Tensor>> {
        self.params.iter().map(|p| p.tensors().into_iter().cloned().collect()).collect()
    }

    /// Groups a flat gradient list (in [`Bound::flat`] order) per parameter.
    pub fn split_grads(&self, flat: Vec<Tensor>) -> Vec<Vec<Tensor>> {
        let mut it = flat.into_iter();
        self.params.iter().map(|p| (0..p.tensors().len()).filter_map(|_| it.next()).collect()).collect()
    }
}

/// Tape variables for a [`ParamSet`], aligned with its parameters.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Vec<Var>>,
}

impl Bound {
    /// Binds raw tensors laid out like [`ParamSet::bind`], without any
    /// manifold validation. Used for finite-difference checks.
    pub fn from_tensors(tape: &Tape, tensors: &[Vec<Tensor>], tracked: bool) -> Bound {
        let vars = tensors
            .iter()
            .map(|ts| ts.iter().map(|t| if tracked { tape.var(t.clone()) } else { tape.constant(t.clone()) }).collect())
            .collect();
        Bound { vars }
    }

    pub fn get(&self, i: usize) -> &Var {
        &self.vars[i][0]
    }

    /// `(Φ, Ψ)` of a biorthogonal parameter.
    pub fn pair(&self, i: usize) -> (&Var, &Var) {
        (&self.vars[i][0], &self.vars[i][1])
    }

    pub fn flat(&self) -> Vec<&Var> {
        self.vars.iter().flatten().collect()
    }

    /// `Σ ‖θ‖²` over the Euclidean entries of `set`, on the tape.
    pub fn euclidean_sq_norm(&self, set: &ParamSet) -> Option<Var> {
        let mut acc: Option<Var> = None;
        for (p, vs) in set.iter().zip(&self.vars) {
            if let ParamValue::Euclidean(_) = p.value {
                let s = vs[0].square().sum();
                acc = Some(match acc {
                    None => s,
                    Some(a) => a.add(&s).expect("scalars"),
                });
            }
        }
        acc
    }
}

/// Anything that owns a [`ParamSet`] and can be trained.
pub trait Parameterized {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
}
