//! Pairs of tall matrices `(Φ, Ψ)` with `ΨᵀΦ = I`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;
use crate::tensor::Tensor;

/// Cross-Gram condition numbers at or above this are rejected.
pub const MAX_RETRACT_COND: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BiorthogonalPair {
    phi: Tensor,
    psi: Tensor,
}

impl BiorthogonalPair {
    /// `(Q, Q)` with `Q` the orthonormal factor of a Gaussian `rows × cols` matrix.
    pub fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Result<Self> {
        if cols == 0 || cols > rows {
            return Err(Error::invalid(alloc::format!("biorthogonal pair needs 0 < cols <= rows, got {rows}x{cols}")));
        }
        let g = rng::normal_tensor(rng, &[rows, cols], 1.0);
        let (q, _) = linalg::qr(&g)?;
        Ok(BiorthogonalPair { psi: q.clone(), phi: q })
    }

    /// First `cols` columns of the identity for both factors.
    pub fn identity(rows: usize, cols: usize) -> Self {
        let e = Tensor::from_fn(&[rows, cols], |k| if k / cols == k % cols { 1.0 } else { 0.0 });
        BiorthogonalPair { phi: e.clone(), psi: e }
    }

    pub fn rows(&self) -> usize {
        self.phi.rows()
    }

    pub fn cols(&self) -> usize {
        self.phi.cols()
    }

    pub fn phi(&self) -> &Tensor {
        &self.phi
    }

    pub fn psi(&self) -> &Tensor {
        &self.psi
    }

    /// `‖ΨᵀΦ − I‖_F`.
    pub fn residual(&self) -> f64 {
        let g = self.psi.transpose().and_then(|pt| pt.matmul(&self.phi));
        match g {
            Ok(g) => g.sub(&Tensor::eye(self.cols())).map(|d| d.frobenius_norm()).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    }
}

/// Keeps `Φ` and rescales `Ψ ← Ψ (ΨᵀΦ)⁻ᵀ`.
pub fn biorth_retract(raw_phi: &Tensor, raw_psi: &Tensor) -> Result<BiorthogonalPair> {
    if raw_phi.shape() != raw_psi.shape() || raw_phi.rank() != 2 {
        return Err(Error::ShapeMismatch {
            op: "biorth_retract",
            left: raw_phi.shape().to_vec(),
            right: raw_psi.shape().to_vec(),
        });
    }
    if raw_phi.cols() > raw_phi.rows() {
        return Err(Error::invalid("biorthogonal factors must be tall"));
    }
    let cross = raw_psi.transpose()?.matmul(raw_phi)?;
    let (inv, cond) = match linalg::inverse_with_cond(&cross) {
        Ok(v) => v,
        Err(Error::Singular { cond }) => return Err(Error::RetractionFailed { cond }),
        Err(e) => return Err(e),
    };
    if cond >= MAX_RETRACT_COND {
        return Err(Error::RetractionFailed { cond });
    }
    let psi = raw_psi.matmul(&inv.transpose()?)?;
    Ok(BiorthogonalPair { phi: raw_phi.clone(), psi })
}

impl BiorthogonalPair {
    /// Rebuilds and re-retracts from raw factors (used when loading checkpoints).
    pub fn from_raw(phi: Tensor, psi: Tensor) -> Result<Self> {
        biorth_retract(&phi, &psi)
    }

    /// Wraps factors without touching them; fails unless `ΨᵀΦ = I` to `tol`.
    pub fn from_exact(phi: Tensor, psi: Tensor, tol: f64) -> Result<Self> {
        let pair = BiorthogonalPair { phi, psi };
        let r = pair.residual();
        if !(r <= tol) {
            return Err(Error::invalid(alloc::format!("biorthogonality residual {r:e} exceeds {tol:e}")));
        }
        Ok(pair)
    }
}

/// Orthogonal projection of `(G_Φ, G_Ψ)` onto the tangent space of the
/// manifold at `pair`, `{(dΦ, dΨ) : ΨᵀdΦ + dΨᵀΦ = 0}`. The multiplier solves
/// `ΨᵀΨ Λ + Λ ΦᵀΦ = ΨᵀG_Φ + G_ΨᵀΦ`.
pub fn biorth_tangent_projection(pair: &BiorthogonalPair, g_phi: &Tensor, g_psi: &Tensor) -> Result<(Tensor, Tensor)> {
    let (phi, psi) = (&pair.phi, &pair.psi);
    let rhs = psi.transpose()?.matmul(g_phi)?.add(&g_psi.transpose()?.matmul(phi)?)?;
    let (a, u) = linalg::sym_eigen(&psi.transpose()?.matmul(psi)?)?;
    let (b, v) = linalg::sym_eigen(&phi.transpose()?.matmul(phi)?)?;
    let r = pair.cols();
    let mut core = u.transpose()?.matmul(&rhs)?.matmul(&v)?;
    for i in 0..r {
        for j in 0..r {
            core.set(i, j, core.at(i, j) / (a[i] + b[j]));
        }
    }
    let lambda = u.matmul(&core)?.matmul(&v.transpose()?)?;
    Ok((g_phi.sub(&psi.matmul(&lambda)?)?, g_psi.sub(&phi.matmul(&lambda.transpose()?)?)?))
}
