//! Small dense linear algebra on square `[n, n]` tensors: Jacobi symmetric
//! eigendecomposition, symmetric matrix functions, Gauss-Jordan inverse,
//! Householder QR and a general matrix exponential.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Floor applied to eigenvalues before `log`, `sqrt` and inverse powers.
pub const EIG_CLAMP: f64 = 1e-12;

/// Inverses with a 1-norm condition estimate above this are refused.
pub const MAX_COND: f64 = 1e14;

fn square_dim(a: &Tensor, op: &'static str) -> Result<usize> {
    match a.shape() {
        [n, m] if n == m => Ok(*n),
        s => Err(Error::InvalidShape { shape: s.to_vec(), reason: alloc::format!("{op} needs a square matrix") }),
    }
}

/// `(A + Aᵀ) / 2`.
pub fn sym(a: &Tensor) -> Result<Tensor> {
    let n = square_dim(a, "sym")?;
    Ok(Tensor::from_fn(&[n, n], |k| 0.5 * (a.data()[k] + a.at(k % n, k / n))))
}

/// `‖A − Aᵀ‖_F`.
pub fn asymmetry(a: &Tensor) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = a.at(i, j) - a.at(j, i);
            s += d * d;
        }
    }
    libm::sqrt(s)
}

/// Eigenvalues (ascending) and eigenvectors (columns of the returned matrix)
/// of a symmetric matrix, by cyclic Jacobi rotations. Only the symmetric part
/// of `a` is used.
pub fn sym_eigen(a: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    let n = square_dim(a, "sym_eigen")?;
    if !a.is_finite() {
        return Err(Error::NonFinite { op: "sym_eigen" });
    }
    let mut m: Vec<f64> = sym(a)?.into_data();
    let mut v = Tensor::eye(n).into_data();
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>();
    if scale == 0.0 {
        return Ok((vec![0.0; n], Tensor::eye(n)));
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]));
    let vals: Vec<f64> = order.iter().map(|&i| m[i * n + i]).collect();
    let vecs = Tensor::from_fn(&[n, n], |k| v[(k / n) * n + order[k % n]]);
    Ok((vals, vecs))
}

/// `V f(Λ) Vᵀ` for symmetric `a`.
pub fn sym_fn(a: &Tensor, f: impl Fn(f64) -> f64) -> Result<Tensor> {
    let (vals, vecs) = sym_eigen(a)?;
    Ok(reassemble(&vals.iter().map(|&l| f(l)).collect::<Vec<_>>(), &vecs))
}

pub(crate) fn reassemble(vals: &[f64], vecs: &Tensor) -> Tensor {
    let n = vals.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let mut s = 0.0;
            for (k, &l) in vals.iter().enumerate() {
                s += vecs.at(i, k) * l * vecs.at(j, k);
            }
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    Tensor::new(&[n, n], out).expect("square")
}

pub fn sym_exp(a: &Tensor) -> Result<Tensor> {
    sym_fn(a, libm::exp)
}

pub fn sym_log(a: &Tensor) -> Result<Tensor> {
    sym_fn(a, |l| libm::log(l.max(EIG_CLAMP)))
}

pub fn sym_sqrt(a: &Tensor) -> Result<Tensor> {
    sym_fn(a, |l| libm::sqrt(l.max(EIG_CLAMP)))
}

pub fn sym_inv_sqrt(a: &Tensor) -> Result<Tensor> {
    sym_fn(a, |l| 1.0 / libm::sqrt(l.max(EIG_CLAMP)))
}

pub fn min_eigenvalue(a: &Tensor) -> Result<f64> {
    Ok(sym_eigen(a)?.0.first().copied().unwrap_or(0.0))
}

fn norm1(a: &[f64], n: usize) -> f64 {
    (0..n).map(|j| (0..n).map(|i| a[i * n + j].abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Inverse and its 1-norm condition number `‖A‖₁ ‖A⁻¹‖₁`.
pub fn inverse_with_cond(a: &Tensor) -> Result<(Tensor, f64)> {
    let n = square_dim(a, "inverse")?;
    let mut m = a.data().to_vec();
    let mut inv = Tensor::eye(n).into_data();
    let anorm = norm1(&m, n);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .expect("non-empty");
        let pv = m[piv * n + col];
        if pv == 0.0 || !pv.is_finite() {
            return Err(Error::Singular { cond: f64::INFINITY });
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
                inv.swap(piv * n + k, col * n + k);
            }
        }
        let r = 1.0 / pv;
        for k in 0..n {
            m[col * n + k] *= r;
            inv[col * n + k] *= r;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = m[i * n + col];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                m[i * n + k] -= f * m[col * n + k];
                inv[i * n + k] -= f * inv[col * n + k];
            }
        }
    }
    let cond = anorm * norm1(&inv, n);
    if !cond.is_finite() || cond > MAX_COND {
        return Err(Error::Singular { cond });
    }
    Ok((Tensor::new(&[n, n], inv).expect("square"), cond))
}

pub fn inverse(a: &Tensor) -> Result<Tensor> {
    inverse_with_cond(a).map(|(inv, _)| inv)
}

/// 1-norm condition number, `inf` for singular matrices.
pub fn cond_estimate(a: &Tensor) -> f64 {
    match inverse_with_cond(a) {
        Ok((_, c)) => c,
        Err(Error::Singular { cond }) => cond,
        Err(_) => f64::INFINITY,
    }
}

/// Thin QR of an `m × n` matrix with `m ≥ n`: returns `Q` (`m × n`,
/// orthonormal columns) and upper-triangular `R` (`n × n`).
pub fn qr(a: &Tensor) -> Result<(Tensor, Tensor)> {
    let (m, n) = match a.shape() {
        [m, n] if m >= n => (*m, *n),
        s => return Err(Error::InvalidShape { shape: s.to_vec(), reason: "qr needs a tall matrix".into() }),
    };
    let mut r = a.data().to_vec();
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut v: Vec<f64> = (k..m).map(|i| r[i * n + k]).collect();
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vn = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if vn > 0.0 {
            for x in &mut v {
                *x /= vn;
            }
            for j in 0..n {
                let d: f64 = (k..m).map(|i| v[i - k] * r[i * n + j]).sum();
                for i in k..m {
                    r[i * n + j] -= 2.0 * v[i - k] * d;
                }
            }
        }
        vs.push(v);
    }
    // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of I.
    let mut q = vec![0.0; m * n];
    for j in 0..n {
        q[j * n + j] = 1.0;
    }
    for k in (0..n).rev() {
        let v = &vs[k];
        for j in 0..n {
            let d: f64 = (k..m).map(|i| v[i - k] * q[i * n + j]).sum();
            for i in k..m {
                q[i * n + j] -= 2.0 * v[i - k] * d;
            }
        }
    }
    // Fix signs so that diag(R) ≥ 0.
    let mut rr = vec![0.0; n * n];
    for i in 0..n {
        let s = if r[i * n + i] < 0.0 { -1.0 } else { 1.0 };
        for j in i..n {
            rr[i * n + j] = s * r[i * n + j];
        }
        for row in 0..m {
            q[row * n + i] *= s;
        }
    }
    Ok((Tensor::new(&[m, n], q)?, Tensor::new(&[n, n], rr)?))
}

/// General matrix exponential by scaling and squaring of a Taylor series.
pub fn expm(a: &Tensor) -> Result<Tensor> {
    let n = square_dim(a, "expm")?;
    let norm = norm1(a.data(), n);
    let mut s = 0u32;
    while norm / f64::from(1u32 << s.min(30)) > 0.25 && s < 60 {
        s += 1;
    }
    let scaled = a.scale(1.0 / libm::pow(2.0, f64::from(s)));
    let mut term = Tensor::eye(n);
    let mut sum = Tensor::eye(n);
    for k in 1..=20 {
        term = term.matmul(&scaled)?.scale(1.0 / k as f64);
        sum = sum.add(&term)?;
    }
    for _ in 0..s {
        sum = sum.matmul(&sum)?;
    }
    Ok(sum)
}
