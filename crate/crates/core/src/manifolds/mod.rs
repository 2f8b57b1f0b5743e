//! Manifold-constrained parameters: affine-invariant SPD geometry, the
//! biorthogonal manifold and Riemannian Adam.

mod adam;
mod biorth;
mod spd;

pub use adam::{riemannian_adam_step, AdamHyper, ManifoldParam, ParamValue};
pub use biorth::{biorth_retract, biorth_tangent_projection, BiorthogonalPair, MAX_RETRACT_COND};
pub use spd::{
    aim_distance, spd_exp, spd_log, spd_retract, spd_riemannian_grad, spd_vector_transport, SpdPoint, SymTangent,
};

