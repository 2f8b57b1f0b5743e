use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use super::integrate::{simulate_sampled, PhaseState, Trajectory};
use super::SystemSpec;
use crate::error::{Error, Result};
use crate::rng;

const MAX_RETRIES: usize = 10;
const SPLIT_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DatasetConfig {
    pub n_traj: usize,
    pub t_span: f64,
    /// RK4 step.
    pub h: f64,
    /// Stored sampling interval, a multiple of `h`.
    pub dt: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { n_traj: 200, t_span: 10.0, h: 1e-3, dt: 0.1, seed: 0 }
    }
}

impl DatasetConfig {
    /// `(RK4 steps per sample, samples per trajectory)`.
    pub fn sampling(&self) -> Result<(usize, usize)> {
        if !(self.h > 0.0 && self.dt >= self.h && self.t_span > 0.0) {
            return Err(Error::invalid("dataset needs 0 < h ≤ dt and t_span > 0"));
        }
        let every = libm::round(self.dt / self.h) as usize;
        if libm::fabs(every as f64 * self.h - self.dt) > 1e-9 * self.dt {
            return Err(Error::invalid(alloc::format!("dt = {} is not a multiple of h = {}", self.dt, self.h)));
        }
        Ok((every, libm::round(self.t_span / self.dt) as usize + 1))
    }
}

/// Trajectory indices per split, each sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Dataset {
    pub system: SystemSpec,
    pub config: DatasetConfig,
    pub trajectories: Vec<Trajectory>,
    pub split: Split,
}

impl Dataset {
    pub fn train(&self) -> Vec<&Trajectory> {
        self.split.train.iter().map(|&i| &self.trajectories[i]).collect()
    }

    pub fn val(&self) -> Vec<&Trajectory> {
        self.split.val.iter().map(|&i| &self.trajectories[i]).collect()
    }

    pub fn test(&self) -> Vec<&Trajectory> {
        self.split.test.iter().map(|&i| &self.trajectories[i]).collect()
    }
}

/// Seeded 80/10/10 assignment of `n` trajectories.
pub fn split_indices(n: usize, seed: u64) -> Split {
    let perm = rng::permutation(&mut rng::stream(seed, SPLIT_STREAM), n);
    let n_train = libm::round(0.8 * n as f64) as usize;
    let n_val = libm::round(0.1 * n as f64) as usize;
    let mut split = Split {
        train: perm[..n_train].to_vec(),
        val: perm[n_train..n_train + n_val].to_vec(),
        test: perm[n_train + n_val..].to_vec(),
    };
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    split
}

/// Draws an initial condition for `spec`.
pub fn sample_ic(spec: &SystemSpec, rng: &mut impl Rng) -> PhaseState {
    let n = spec.dof();
    let u = |rng: &mut _, lo, hi| rng::uniform(rng, lo, hi);
    match *spec {
        SystemSpec::MassSpring { .. } | SystemSpec::CoupledOscillators { .. } => {
            let q = (0..n).map(|_| u(rng, -1.0, 1.0)).collect();
            let p = (0..n).map(|_| u(rng, -1.0, 1.0)).collect();
            PhaseState::new(q, p)
        }
        SystemSpec::Pendulum { .. } => {
            let q = u(rng, -PI / 2.0, PI / 2.0);
            PhaseState::new(alloc::vec![q], alloc::vec![u(rng, -1.0, 1.0)])
        }
        SystemSpec::TwoBody { m1, m2, g } => {
            // perturbed circular orbit about the centre of mass, zero total momentum
            let r = u(rng, 0.8, 1.2);
            let angle = u(rng, 0.0, 2.0 * PI);
            let speed = libm::sqrt(g * (m1 + m2) / r) * u(rng, 0.9, 1.1);
            let (c, s) = (libm::cos(angle), libm::sin(angle));
            let (f1, f2) = (m2 / (m1 + m2), m1 / (m1 + m2));
            let q = alloc::vec![-f1 * r * c, -f1 * r * s, f2 * r * c, f2 * r * s];
            let p = alloc::vec![m1 * f1 * speed * s, -m1 * f1 * speed * c, -m2 * f2 * speed * s, m2 * f2 * speed * c];
            PhaseState::new(q, p)
        }
        SystemSpec::ClothGrid { width, rest_length, .. } => {
            // the top row starts at rest; the remaining nodes are displaced
            let mut q = spec.rest_positions();
            for x in q.iter_mut().skip(2 * width) {
                *x += 0.05 * rest_length * rng::normal(rng);
            }
            PhaseState::new(q, alloc::vec![0.0; n])
        }
    }
}

/// Trajectory `index` of a dataset. Initial conditions whose integration
/// blows up are redrawn from the same stream.
pub fn generate_trajectory(spec: &SystemSpec, cfg: &DatasetConfig, index: usize) -> Result<Trajectory> {
    let (every, samples) = cfg.sampling()?;
    let mut r = rng::stream(cfg.seed, index as u64);
    for _ in 0..=MAX_RETRIES {
        let s0 = sample_ic(spec, &mut r);
        match simulate_sampled(spec, &s0, cfg.h, every, samples) {
            Ok(mut t) if !t.diverged => {
                t.seed = cfg.seed;
                return Ok(t);
            }
            Ok(_) | Err(Error::SingularConfiguration(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Diverged { step: index })
}

pub fn generate_dataset(spec: &SystemSpec, cfg: &DatasetConfig) -> Result<Dataset> {
    spec.validate()?;
    if cfg.n_traj < 10 {
        return Err(Error::invalid("a dataset needs at least 10 trajectories"));
    }
    let trajectories = (0..cfg.n_traj).map(|i| generate_trajectory(spec, cfg, i)).collect::<Result<Vec<_>>>()?;
    Ok(Dataset { system: spec.clone(), config: cfg.clone(), trajectories, split: split_indices(cfg.n_traj, cfg.seed) })
}
