use alloc::vec::Vec;

use super::SystemSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhaseState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Self {
        PhaseState { q, p }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.p).all(|x| x.is_finite())
    }

    /// `[q, p]` as one vector.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut z = self.q.clone();
        z.extend_from_slice(&self.p);
        z
    }

    pub fn from_slice(z: &[f64]) -> Self {
        let n = z.len() / 2;
        PhaseState { q: z[..n].to_vec(), p: z[n..].to_vec() }
    }
}

/// Uniformly sampled solution of a system.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `[T, 2n]` rows `(q, p)`.
    pub states: Tensor,
    /// `[T, 2n]` rows `(q̇, ṗ)` from the analytic field.
    pub derivs: Tensor,
    pub energy: Vec<f64>,
    pub seed: u64,
    /// Set when the integration stopped early on a non-finite or singular
    /// state; the series then ends at the last good sample.
    pub diverged: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.states.cols() / 2
    }

    pub fn state(&self, t: usize) -> PhaseState {
        let w = self.states.cols();
        PhaseState::from_slice(&self.states.data()[t * w..(t + 1) * w])
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }
}

fn field(spec: &SystemSpec, z: &[f64]) -> Result<Vec<f64>> {
    let n = z.len() / 2;
    let (mut dq, dp) = spec.true_derivatives(&z[..n], &z[n..])?;
    dq.extend(dp);
    Ok(dq)
}

fn axpy(z: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    z.iter().zip(k).map(|(z, k)| z + a * k).collect()
}

/// One classical fourth-order Runge–Kutta step on the true field.
pub fn rk4_step(spec: &SystemSpec, s: &PhaseState, h: f64) -> Result<PhaseState> {
    if !(h > 0.0) {
        return Err(Error::invalid("rk4 step needs h > 0"));
    }
    let z = s.to_vec();
    let k1 = field(spec, &z)?;
    let k2 = field(spec, &axpy(&z, 0.5 * h, &k1))?;
    let k3 = field(spec, &axpy(&z, 0.5 * h, &k2))?;
    let k4 = field(spec, &axpy(&z, h, &k3))?;
    let next: Vec<f64> =
        (0..z.len()).map(|i| z[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
    Ok(PhaseState::from_slice(&next))
}

/// `steps` RK4 steps, every state recorded.
pub fn simulate(spec: &SystemSpec, s0: &PhaseState, h: f64, steps: usize) -> Result<Trajectory> {
    simulate_sampled(spec, s0, h, 1, steps + 1)
}

/// `samples` states spaced `every` RK4 steps of size `h` apart.
pub fn simulate_sampled(
    spec: &SystemSpec,
    s0: &PhaseState,
    h: f64,
    every: usize,
    samples: usize,
) -> Result<Trajectory> {
    spec.validate()?;
    if !(h > 0.0) || every == 0 || samples == 0 {
        return Err(Error::invalid("simulate needs h > 0, every ≥ 1, samples ≥ 1"));
    }
    let n = spec.dof();
    if s0.q.len() != n || s0.p.len() != n {
        return Err(Error::ShapeMismatch { op: "simulate", left: alloc::vec![s0.q.len(), s0.p.len()], right: alloc::vec![n, n] });
    }
    let mut times = Vec::with_capacity(samples);
    let mut states = Vec::with_capacity(samples * 2 * n);
    let mut derivs = Vec::with_capacity(samples * 2 * n);
    let mut energy = Vec::with_capacity(samples);
    let mut s = s0.clone();
    let mut diverged = false;
    'outer: for t in 0..samples {
        if t > 0 {
            for _ in 0..every {
                match rk4_step(spec, &s, h) {
                    Ok(next) if next.is_finite() => s = next,
                    _ => {
                        diverged = true;
                        break 'outer;
                    }
                }
            }
        }
        let (dq, dp) = match spec.true_derivatives(&s.q, &s.p) {
            Ok(d) => d,
            Err(e) if t == 0 => return Err(e),
            Err(_) => {
                diverged = true;
                break;
            }
        };
        times.push(t as f64 * every as f64 * h);
        states.extend_from_slice(&s.q);
        states.extend_from_slice(&s.p);
        derivs.extend(dq);
        derivs.extend(dp);
        energy.push(spec.true_hamiltonian(&s.q, &s.p)?);
    }
    let t = times.len();
    Ok(Trajectory {
        times,
        states: Tensor::new(&[t, 2 * n], states)?,
        derivs: Tensor::new(&[t, 2 * n], derivs)?,
        energy,
        seed: 0,
        diverged,
    })
}
