//! Affine-invariant geometry on symmetric positive-definite matrices.

use crate::error::{Error, Result};
use crate::linalg::{self, sym};
use crate::tensor::Tensor;

const SYM_TOL: f64 = 1e-10;

fn check_symmetric(mat: &Tensor) -> Result<()> {
    if !matches!(mat.shape(), [a, b] if a == b) {
        return Err(Error::NotSpd(alloc::format!("expected a square matrix, got shape {:?}", mat.shape())));
    }
    let asym = linalg::asymmetry(mat);
    if asym > SYM_TOL * mat.frobenius_norm() {
        return Err(Error::NotSpd(alloc::format!("asymmetry {asym:e}")));
    }
    Ok(())
}

/// A symmetric positive-definite matrix.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpdPoint {
    mat: Tensor,
}

impl SpdPoint {
    /// Validates symmetry (relative to the Frobenius norm) and a strictly
    /// positive spectrum.
    pub fn new(mat: Tensor) -> Result<Self> {
        check_symmetric(&mat)?;
        if !mat.is_finite() {
            return Err(Error::NotSpd("non-finite entries".into()));
        }
        let min = linalg::min_eigenvalue(&mat)?;
        if !(min > 0.0) {
            return Err(Error::NotSpd(alloc::format!("min eigenvalue {min:e}")));
        }
        Ok(SpdPoint { mat })
    }

    pub fn identity(n: usize) -> Self {
        SpdPoint { mat: Tensor::eye(n) }
    }

    /// Symmetrizes `mat` and validates the result.
    pub fn from_symmetrized(mat: &Tensor) -> Result<Self> {
        Self::new(sym(mat)?)
    }

    pub fn n(&self) -> usize {
        self.mat.rows()
    }

    pub fn mat(&self) -> &Tensor {
        &self.mat
    }

    pub fn into_mat(self) -> Tensor {
        self.mat
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.mat).unwrap_or(f64::NAN)
    }

    fn sqrt_pair(&self) -> Result<(Tensor, Tensor)> {
        let (vals, vecs) = linalg::sym_eigen(&self.mat)?;
        let s: alloc::vec::Vec<f64> = vals.iter().map(|&l| libm::sqrt(l.max(linalg::EIG_CLAMP))).collect();
        let si: alloc::vec::Vec<f64> = s.iter().map(|&v| 1.0 / v).collect();
        Ok((linalg::reassemble(&s, &vecs), linalg::reassemble(&si, &vecs)))
    }
}

/// A symmetric matrix, read as a tangent vector at some SPD point.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SymTangent {
    mat: Tensor,
}

impl SymTangent {
    pub fn new(mat: Tensor) -> Result<Self> {
        check_symmetric(&mat)?;
        Ok(SymTangent { mat })
    }

    pub fn zeros(n: usize) -> Self {
        SymTangent { mat: Tensor::zeros(&[n, n]) }
    }

    pub fn from_symmetrized(mat: &Tensor) -> Result<Self> {
        Ok(SymTangent { mat: sym(mat)? })
    }

    pub fn n(&self) -> usize {
        self.mat.rows()
    }

    pub fn mat(&self) -> &Tensor {
        &self.mat
    }

    pub fn into_mat(self) -> Tensor {
        self.mat
    }
}

fn dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch { op: "spd", left: alloc::vec![a, a], right: alloc::vec![b, b] });
    }
    Ok(())
}

fn conj(a: &Tensor, x: &Tensor) -> Result<Tensor> {
    sym(&a.matmul(x)?.matmul(a)?)
}

/// `M₀^{1/2} exp(M₀^{-1/2} Ξ M₀^{-1/2}) M₀^{1/2}`.
pub fn spd_exp(m0: &SpdPoint, xi: &SymTangent) -> Result<SpdPoint> {
    dims(m0.n(), xi.n())?;
    let (s, si) = m0.sqrt_pair()?;
    let inner = linalg::sym_exp(&conj(&si, xi.mat())?)?;
    SpdPoint::new(conj(&s, &inner)?)
}

/// Inverse of [`spd_exp`] at `m0`.
pub fn spd_log(m0: &SpdPoint, m: &SpdPoint) -> Result<SymTangent> {
    dims(m0.n(), m.n())?;
    let (s, si) = m0.sqrt_pair()?;
    let inner = linalg::sym_log(&conj(&si, m.mat())?)?;
    Ok(SymTangent { mat: conj(&s, &inner)? })
}

/// `‖log(M₁^{-1/2} M₂ M₁^{-1/2})‖_F`.
pub fn aim_distance(m1: &SpdPoint, m2: &SpdPoint) -> Result<f64> {
    dims(m1.n(), m2.n())?;
    let (_, si) = m1.sqrt_pair()?;
    let (vals, _) = linalg::sym_eigen(&conj(&si, m2.mat())?)?;
    Ok(libm::sqrt(vals.iter().map(|&l| libm::log(l.max(linalg::EIG_CLAMP))).map(|x| x * x).sum::<f64>()))
}

/// `M sym(G) M`.
pub fn spd_riemannian_grad(m: &SpdPoint, euclidean_grad: &Tensor) -> Result<SymTangent> {
    if euclidean_grad.shape() != m.mat().shape() {
        return Err(Error::ShapeMismatch {
            op: "spd_riemannian_grad",
            left: m.mat().shape().to_vec(),
            right: euclidean_grad.shape().to_vec(),
        });
    }
    Ok(SymTangent { mat: conj(m.mat(), &sym(euclidean_grad)?)? })
}

/// Exact exponential retraction.
pub fn spd_retract(m: &SpdPoint, step: &SymTangent) -> Result<SpdPoint> {
    spd_exp(m, step)
}

/// `E v Eᵀ` with `E = (M₂ M₁⁻¹)^{1/2} = M₁^{1/2} (M₁^{-1/2} M₂ M₁^{-1/2})^{1/2} M₁^{-1/2}`.
pub fn spd_vector_transport(from: &SpdPoint, to: &SpdPoint, v: &SymTangent) -> Result<SymTangent> {
    dims(from.n(), to.n())?;
    dims(from.n(), v.n())?;
    if from == to {
        return Ok(v.clone());
    }
    let (s, si) = from.sqrt_pair()?;
    let mid = linalg::sym_sqrt(&conj(&si, to.mat())?)?;
    let e = s.matmul(&mid)?.matmul(&si)?;
    let et = e.transpose()?;
    Ok(SymTangent { mat: sym(&e.matmul(v.mat())?.matmul(&et)?)? })
}
