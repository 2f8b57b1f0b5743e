use alloc::vec::Vec;

use rand::Rng;

use super::activation::InvertibleActivation;
use super::mlp::{Activation, Mlp};
use super::{Bound, ParamSet};
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::manifolds::{BiorthogonalPair, ParamValue};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AeKind {
    Constrained,
    Vanilla,
}

/// `dims` runs from the full dimension to the latent one. For the constrained
/// kind every entry is a layer boundary; for the vanilla kind the inner
/// entries are hidden widths of the encoder (mirrored by the decoder).
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AeConfig {
    pub kind: AeKind,
    pub dims: Vec<usize>,
    pub activation: InvertibleActivation,
}

impl AeConfig {
    pub fn constrained(dims: &[usize]) -> Self {
        AeConfig { kind: AeKind::Constrained, dims: dims.to_vec(), activation: InvertibleActivation::default() }
    }

    pub fn vanilla(dims: &[usize]) -> Self {
        AeConfig { kind: AeKind::Vanilla, dims: dims.to_vec(), activation: InvertibleActivation::default() }
    }
}

/// Stack of paired layers. Layer `l` maps `d_{l-1} → d_l` with
/// `ρ(h) = σ⁻(Ψᵀ(h − b))` and back with `φ(z) = Φ σ⁺(z) + b`; since
/// `ΨᵀΦ = I`, `ρ∘φ` is the identity on each layer.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConstrainedAutoencoder {
    dims: Vec<usize>,
    act: InvertibleActivation,
    /// `(pair, bias)` parameter indices.
    layers: Vec<(usize, usize)>,
}

impl ConstrainedAutoencoder {
    pub fn build(
        set: &mut ParamSet,
        name: &str,
        dims: &[usize],
        act: InvertibleActivation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.windows(2).any(|w| w[1] > w[0]) || dims.contains(&0) {
            return Err(Error::invalid(alloc::format!("{name}: widths must not increase, got {dims:?}")));
        }
        let mut layers = Vec::new();
        for (l, w) in dims.windows(2).enumerate() {
            let pair = BiorthogonalPair::random(w[0], w[1], rng)?;
            let pi = set.push(alloc::format!("{name}.pair{l}"), ParamValue::Biorthogonal(pair));
            let bi = set.push(alloc::format!("{name}.b{l}"), ParamValue::Euclidean(Tensor::zeros(&[w[0]])));
            layers.push((pi, bi));
        }
        Ok(ConstrainedAutoencoder { dims: dims.to_vec(), act, layers })
    }

    pub fn layers(&self) -> &[(usize, usize)] {
        &self.layers
    }

    pub fn activation(&self) -> InvertibleActivation {
        self.act
    }

    pub fn encode(&self, b: &Bound, x: &Var) -> Result<Var> {
        let batch = x.shape()[0];
        let mut h = x.clone();
        for &(pi, bi) in &self.layers {
            let (_, psi) = b.pair(pi);
            h = self.act.inverse_var(&h.sub(&b.get(bi).broadcast_batch(batch))?.matmul(psi)?);
        }
        Ok(h)
    }

    pub fn decode(&self, b: &Bound, z: &Var) -> Result<Var> {
        let batch = z.shape()[0];
        let mut h = z.clone();
        for &(pi, bi) in self.layers.iter().rev() {
            let (phi, _) = b.pair(pi);
            h = self.act.forward_var(&h).matmul(&phi.transpose()?)?.add(&b.get(bi).broadcast_batch(batch))?;
        }
        Ok(h)
    }
}

/// Unconstrained tanh encoder and decoder networks.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VanillaAutoencoder {
    encoder: Mlp,
    decoder: Mlp,
}

impl VanillaAutoencoder {
    pub fn build(set: &mut ParamSet, name: &str, dims: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let encoder = Mlp::new(set, &alloc::format!("{name}.enc"), dims, Activation::Tanh, 1.0, rng)?;
        let rev: Vec<usize> = dims.iter().rev().copied().collect();
        let decoder = Mlp::new(set, &alloc::format!("{name}.dec"), &rev, Activation::Tanh, 1.0, rng)?;
        Ok(VanillaAutoencoder { encoder, decoder })
    }

    pub fn encode(&self, b: &Bound, x: &Var) -> Result<Var> {
        self.encoder.forward(b, x)
    }

    pub fn decode(&self, b: &Bound, z: &Var) -> Result<Var> {
        self.decoder.forward(b, z)
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Autoencoder {
    Constrained(ConstrainedAutoencoder),
    Vanilla(VanillaAutoencoder),
}

impl Autoencoder {
    pub fn build(cfg: &AeConfig, set: &mut ParamSet, name: &str, rng: &mut impl Rng) -> Result<Self> {
        Ok(match cfg.kind {
            AeKind::Constrained => {
                Autoencoder::Constrained(ConstrainedAutoencoder::build(set, name, &cfg.dims, cfg.activation, rng)?)
            }
            AeKind::Vanilla => Autoencoder::Vanilla(VanillaAutoencoder::build(set, name, &cfg.dims, rng)?),
        })
    }

    pub fn kind(&self) -> AeKind {
        match self {
            Autoencoder::Constrained(_) => AeKind::Constrained,
            Autoencoder::Vanilla(_) => AeKind::Vanilla,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Autoencoder::Constrained(a) => a.dims[0],
            Autoencoder::Vanilla(a) => a.encoder.input_dim(),
        }
    }

    pub fn r(&self) -> usize {
        match self {
            Autoencoder::Constrained(a) => *a.dims.last().unwrap(),
            Autoencoder::Vanilla(a) => a.encoder.output_dim(),
        }
    }

    fn check_dim(x: &Var, want: usize, op: &'static str) -> Result<()> {
        let s = x.shape();
        if s.len() != 2 || s[1] != want {
            return Err(Error::ShapeMismatch { op, left: s, right: alloc::vec![want] });
        }
        Ok(())
    }

    /// `[B, n] → [B, r]`.
    pub fn encode(&self, b: &Bound, x: &Var) -> Result<Var> {
        Self::check_dim(x, self.n(), "encode")?;
        match self {
            Autoencoder::Constrained(a) => a.encode(b, x),
            Autoencoder::Vanilla(a) => a.encode(b, x),
        }
    }

    /// `[B, r] → [B, n]`.
    pub fn decode(&self, b: &Bound, z: &Var) -> Result<Var> {
        Self::check_dim(z, self.r(), "decode")?;
        match self {
            Autoencoder::Constrained(a) => a.decode(b, z),
            Autoencoder::Vanilla(a) => a.decode(b, z),
        }
    }

    /// Index of the bias added last by the decoder.
    pub fn outer_bias(&self) -> usize {
        match self {
            Autoencoder::Constrained(a) => a.layers[0].1,
            Autoencoder::Vanilla(a) => a.decoder.last_layer().1,
        }
    }

    /// Sets the decoder's output offset, typically to the data mean.
    pub fn set_outer_bias(&self, set: &mut ParamSet, mean: &Tensor) -> Result<()> {
        set.set_value(self.outer_bias(), ParamValue::Euclidean(mean.clone()))
    }
}
