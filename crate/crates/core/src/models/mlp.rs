use alloc::vec::Vec;

use rand::Rng;

use super::{Bound, ParamSet};
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::manifolds::ParamValue;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Softplus,
}

impl Activation {
    pub fn apply(self, x: &Var) -> Var {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Softplus => x.softplus(),
        }
    }
}

/// Fully connected network; hidden layers use `act`, the output layer is
/// linear. Input is `[B, widths[0]]`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Mlp {
    widths: Vec<usize>,
    act: Activation,
    layers: Vec<(usize, usize)>,
}

impl Mlp {
    /// Uniform fan-in initialisation `U(±1/√fan_in)`; the last layer is
    /// additionally multiplied by `last_scale`.
    pub fn new(
        set: &mut ParamSet,
        name: &str,
        widths: &[usize],
        act: Activation,
        last_scale: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if widths.len() < 3 || widths.contains(&0) {
            return Err(Error::invalid(alloc::format!(
                "{name}: an MLP needs at least one hidden layer and positive widths, got {widths:?}"
            )));
        }
        let mut layers = Vec::new();
        for (l, w) in widths.windows(2).enumerate() {
            let bound = 1.0 / libm::sqrt(w[0] as f64);
            let scale = if l + 2 == widths.len() { last_scale } else { 1.0 };
            let wt = rng::uniform_tensor(rng, &[w[0], w[1]], -bound, bound).scale(scale);
            let bt = rng::uniform_tensor(rng, &[w[1]], -bound, bound).scale(scale);
            let wi = set.push(alloc::format!("{name}.w{l}"), ParamValue::Euclidean(wt));
            let bi = set.push(alloc::format!("{name}.b{l}"), ParamValue::Euclidean(bt));
            layers.push((wi, bi));
        }
        Ok(Mlp { widths: widths.to_vec(), act, layers })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Parameter indices of the output layer `(weight, bias)`.
    pub fn last_layer(&self) -> (usize, usize) {
        *self.layers.last().unwrap()
    }

    pub fn forward(&self, b: &Bound, x: &Var) -> Result<Var> {
        let batch = x.shape()[0];
        let mut h = x.clone();
        for (l, &(wi, bi)) in self.layers.iter().enumerate() {
            h = h.matmul(b.get(wi))?.add(&b.get(bi).broadcast_batch(batch))?;
            if l + 1 < self.layers.len() {
                h = self.act.apply(&h);
            }
        }
        Ok(h)
    }
}
