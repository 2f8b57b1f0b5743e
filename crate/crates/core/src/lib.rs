//! Learning Hamiltonian dynamics with geometric priors.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every numerical
//! piece of the pipeline:
//!
//! * [`autodiff`]: a dense-tensor reverse-mode tape that can record its own
//!   backward pass, so losses built from `∂H/∂q` and `∂H/∂p` can be
//!   differentiated again with respect to network parameters.
//! * [`manifolds`]: the affine-invariant SPD geometry, the biorthogonal
//!   manifold and a Riemannian Adam that keeps parameters on them.
//! * [`models`]: the baseline MLP, four Hamiltonian network variants, the
//!   constrained (biorthogonal) and vanilla autoencoders and the reduced-order
//!   model that couples them.
//! * [`systems`]: analytic benchmark Hamiltonians, RK4 ground truth and
//!   dataset generation.
//! * [`training`] and [`eval`]: losses, the training loop with early stopping,
//!   rollouts and metrics.
//!
//! File formats, the CLI and anything touching the OS live in the `geohnn`
//! companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod manifolds;
pub mod models;
pub mod rng;
pub mod systems;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
