//! Ground-truth physics: the benchmark Hamiltonians, an RK4 reference
//! integrator and dataset generation.

mod dataset;
mod integrate;

use alloc::vec;
use alloc::vec::Vec;

pub use dataset::{generate_dataset, generate_trajectory, sample_ic, split_indices, Dataset, DatasetConfig, Split};
pub use integrate::{rk4_step, simulate, simulate_sampled, PhaseState, Trajectory};

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A (possibly learned) Hamiltonian vector field evaluated on batches
/// `q, p: [B, n]`.
pub trait VectorField {
    fn dof(&self) -> usize;
    /// `H` per row, `[B]`. Fails for fields without an energy.
    fn energies(&self, q: &Tensor, p: &Tensor) -> Result<Tensor>;
    /// `(q̇, ṗ)`, both shaped like the inputs.
    fn time_derivatives(&self, q: &Tensor, p: &Tensor) -> Result<(Tensor, Tensor)>;
}

const MIN_DISTANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", rename_all_fields = "kebab-case")]
pub enum SystemSpec {
    MassSpring {
        m: f64,
        k: f64,
    },
    /// A chain `wall – m₁ – … – m_count – wall`; `springs` has `count + 1`
    /// entries, the first and last being the wall springs.
    CoupledOscillators {
        count: usize,
        masses: Vec<f64>,
        springs: Vec<f64>,
    },
    /// Planar; `q = (x₁, y₁, x₂, y₂)`.
    TwoBody {
        m1: f64,
        m2: f64,
        g: f64,
    },
    Pendulum {
        m: f64,
        l: f64,
        g: f64,
    },
    /// Planar grid of `width × height` nodes with springs along the
    /// 4-neighbour edges. Node `(i, j)` rests at `(i L₀, −j L₀)`; coordinates
    /// are stored node by node as `(x, y)`, rows first.
    ClothGrid {
        width: usize,
        height: usize,
        node_mass: f64,
        k: f64,
        rest_length: f64,
    },
}

impl SystemSpec {
    pub const NAMES: [&'static str; 5] = ["mass-spring", "coupled-oscillators", "two-body", "pendulum", "cloth"];

    pub fn mass_spring() -> Self {
        SystemSpec::MassSpring { m: 1.0, k: 1.0 }
    }

    pub fn coupled_oscillators(count: usize) -> Self {
        SystemSpec::CoupledOscillators { count, masses: vec![1.0; count], springs: vec![1.0; count + 1] }
    }

    pub fn two_body() -> Self {
        SystemSpec::TwoBody { m1: 1.0, m2: 1.0, g: 1.0 }
    }

    pub fn pendulum() -> Self {
        SystemSpec::Pendulum { m: 1.0, l: 1.0, g: 1.0 }
    }

    pub fn cloth(width: usize, height: usize) -> Self {
        SystemSpec::ClothGrid { width, height, node_mass: 1.0, k: 10.0, rest_length: 1.0 }
    }

    /// Default instance for a CLI name.
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "mass-spring" => Self::mass_spring(),
            "coupled-oscillators" => Self::coupled_oscillators(3),
            "two-body" => Self::two_body(),
            "pendulum" => Self::pendulum(),
            "cloth" => Self::cloth(4, 4),
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SystemSpec::MassSpring { .. } => "mass-spring",
            SystemSpec::CoupledOscillators { .. } => "coupled-oscillators",
            SystemSpec::TwoBody { .. } => "two-body",
            SystemSpec::Pendulum { .. } => "pendulum",
            SystemSpec::ClothGrid { .. } => "cloth",
        }
    }

    pub fn dof(&self) -> usize {
        match self {
            SystemSpec::MassSpring { .. } | SystemSpec::Pendulum { .. } => 1,
            SystemSpec::CoupledOscillators { count, .. } => *count,
            SystemSpec::TwoBody { .. } => 4,
            SystemSpec::ClothGrid { width, height, .. } => 2 * width * height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |vals: &[f64]| vals.iter().all(|v| v.is_finite() && *v > 0.0);
        let ok = match self {
            SystemSpec::MassSpring { m, k } => positive(&[*m, *k]),
            SystemSpec::CoupledOscillators { count, masses, springs } => {
                *count > 0 && masses.len() == *count && springs.len() == count + 1 && positive(masses) && positive(springs)
            }
            SystemSpec::TwoBody { m1, m2, g } => positive(&[*m1, *m2, *g]),
            SystemSpec::Pendulum { m, l, g } => positive(&[*m, *l, *g]),
            SystemSpec::ClothGrid { width, height, node_mass, k, rest_length } => {
                *width > 0 && *height > 0 && width * height > 1 && positive(&[*node_mass, *k, *rest_length])
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(alloc::format!("invalid system parameters: {self:?}")))
        }
    }

    /// Per-coordinate inverse masses.
    pub fn inverse_masses(&self) -> Vec<f64> {
        match self {
            SystemSpec::MassSpring { m, .. } => vec![1.0 / m],
            SystemSpec::Pendulum { m, l, .. } => vec![1.0 / (m * l * l)],
            SystemSpec::CoupledOscillators { masses, .. } => masses.iter().map(|m| 1.0 / m).collect(),
            SystemSpec::TwoBody { m1, m2, .. } => vec![1.0 / m1, 1.0 / m1, 1.0 / m2, 1.0 / m2],
            SystemSpec::ClothGrid { node_mass, .. } => vec![1.0 / node_mass; self.dof()],
        }
    }

    /// Grid edges as node index pairs.
    pub fn cloth_edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        if let SystemSpec::ClothGrid { width, height, .. } = *self {
            for j in 0..height {
                for i in 0..width {
                    let a = j * width + i;
                    if i + 1 < width {
                        edges.push((a, a + 1));
                    }
                    if j + 1 < height {
                        edges.push((a, a + width));
                    }
                }
            }
        }
        edges
    }

    /// Rest positions of the cloth nodes (all zeros for other systems).
    pub fn rest_positions(&self) -> Vec<f64> {
        match *self {
            SystemSpec::ClothGrid { width, height, rest_length, .. } => {
                let mut q = Vec::with_capacity(2 * width * height);
                for j in 0..height {
                    for i in 0..width {
                        q.push(i as f64 * rest_length);
                        q.push(-(j as f64) * rest_length);
                    }
                }
                q
            }
            _ => vec![0.0; self.dof()],
        }
    }

    fn check_dims(&self, q: &[f64], p: &[f64]) -> Result<()> {
        let n = self.dof();
        if q.len() != n || p.len() != n {
            return Err(Error::ShapeMismatch { op: "system state", left: vec![q.len(), p.len()], right: vec![n, n] });
        }
        Ok(())
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        self.inverse_masses().iter().zip(p).map(|(w, p)| 0.5 * w * p * p).sum()
    }

    pub fn potential(&self, q: &[f64]) -> Result<f64> {
        match self {
            SystemSpec::MassSpring { k, .. } => Ok(0.5 * k * q[0] * q[0]),
            SystemSpec::Pendulum { m, l, g } => Ok(-m * g * l * libm::cos(q[0])),
            SystemSpec::CoupledOscillators { springs, .. } => {
                let at = |i: usize| if i == 0 || i > q.len() { 0.0 } else { q[i - 1] };
                Ok(springs.iter().enumerate().map(|(s, k)| {
                    let e = at(s + 1) - at(s);
                    0.5 * k * e * e
                }).sum())
            }
            SystemSpec::TwoBody { m1, m2, g } => {
                let d = libm::hypot(q[0] - q[2], q[1] - q[3]);
                if d <= MIN_DISTANCE {
                    return Err(Error::SingularConfiguration("coincident bodies"));
                }
                Ok(-g * m1 * m2 / d)
            }
            SystemSpec::ClothGrid { k, rest_length, .. } => {
                let mut v = 0.0;
                for (a, b) in self.cloth_edges() {
                    let d = libm::hypot(q[2 * a] - q[2 * b], q[2 * a + 1] - q[2 * b + 1]);
                    v += 0.5 * k * (d - rest_length) * (d - rest_length);
                }
                Ok(v)
            }
        }
    }

    pub fn true_hamiltonian(&self, q: &[f64], p: &[f64]) -> Result<f64> {
        self.check_dims(q, p)?;
        Ok(self.kinetic(p) + self.potential(q)?)
    }

    /// `∂V/∂q`, derived by hand per system.
    pub fn potential_gradient(&self, q: &[f64]) -> Result<Vec<f64>> {
        let n = q.len();
        let mut g = vec![0.0; n];
        match self {
            SystemSpec::MassSpring { k, .. } => g[0] = k * q[0],
            SystemSpec::Pendulum { m, l, g: grav } => g[0] = m * grav * l * libm::sin(q[0]),
            SystemSpec::CoupledOscillators { springs, .. } => {
                let at = |i: usize| if i == 0 || i > n { 0.0 } else { q[i - 1] };
                for (i, gi) in g.iter_mut().enumerate() {
                    let c = i + 1;
                    *gi = springs[c - 1] * (at(c) - at(c - 1)) - springs[c] * (at(c + 1) - at(c));
                }
            }
            SystemSpec::TwoBody { m1, m2, g: grav } => {
                let (dx, dy) = (q[0] - q[2], q[1] - q[3]);
                let d = libm::hypot(dx, dy);
                if d <= MIN_DISTANCE {
                    return Err(Error::SingularConfiguration("coincident bodies"));
                }
                let c = grav * m1 * m2 / (d * d * d);
                g = vec![c * dx, c * dy, -c * dx, -c * dy];
            }
            SystemSpec::ClothGrid { k, rest_length, .. } => {
                for (a, b) in self.cloth_edges() {
                    let (dx, dy) = (q[2 * a] - q[2 * b], q[2 * a + 1] - q[2 * b + 1]);
                    let d = libm::hypot(dx, dy);
                    if d <= MIN_DISTANCE {
                        return Err(Error::SingularConfiguration("coincident cloth nodes"));
                    }
                    let c = k * (d - rest_length) / d;
                    g[2 * a] += c * dx;
                    g[2 * a + 1] += c * dy;
                    g[2 * b] -= c * dx;
                    g[2 * b + 1] -= c * dy;
                }
            }
        }
        Ok(g)
    }

    /// Hamilton's equations with analytic partials.
    pub fn true_derivatives(&self, q: &[f64], p: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_dims(q, p)?;
        let qdot = self.inverse_masses().iter().zip(p).map(|(w, p)| w * p).collect();
        let pdot = self.potential_gradient(q)?.into_iter().map(|g| -g).collect();
        Ok((qdot, pdot))
    }

    /// Constant `[n, E]` matrix whose columns are the spring extensions of a
    /// chain (with walls), for `q · D`.
    fn chain_difference(n: usize) -> Tensor {
        let mut d = Tensor::zeros(&[n, n + 1]);
        for s in 0..=n {
            if s < n {
                d.set(s, s, 1.0);
            }
            if s > 0 {
                d.set(s - 1, s, -1.0);
            }
        }
        d
    }

    /// `[n, E]` selectors for the x and y extensions of every grid edge.
    fn edge_differences(&self) -> (Tensor, Tensor) {
        let edges = self.cloth_edges();
        let n = self.dof();
        let (mut dx, mut dy) = (Tensor::zeros(&[n, edges.len()]), Tensor::zeros(&[n, edges.len()]));
        for (e, &(a, b)) in edges.iter().enumerate() {
            dx.set(2 * a, e, 1.0);
            dx.set(2 * b, e, -1.0);
            dy.set(2 * a + 1, e, 1.0);
            dy.set(2 * b + 1, e, -1.0);
        }
        (dx, dy)
    }

    /// The same Hamiltonian on a tape, `q, p: [B, n] → [B, 1]`.
    pub fn energy_var(&self, q: &Var, p: &Var) -> Result<Var> {
        let tape = q.tape();
        let batch = q.shape()[0];
        let w = tape.constant(Tensor::vector(&self.inverse_masses())).broadcast_batch(batch);
        let kinetic = p.square().mul(&w)?.row_sum()?.scale(0.5);
        let potential = match self {
            SystemSpec::MassSpring { k, .. } => q.square().scale(0.5 * k),
            SystemSpec::Pendulum { m, l, g } => q.cos().scale(-m * g * l),
            SystemSpec::CoupledOscillators { springs, .. } => {
                let d = tape.constant(Self::chain_difference(q.shape()[1]));
                let ks = tape.constant(Tensor::matrix(springs.len(), 1, springs.clone())?);
                q.matmul(&d)?.square().matmul(&ks)?.scale(0.5)
            }
            SystemSpec::TwoBody { m1, m2, g } => {
                let dx = q.slice(0, 1)?.sub(&q.slice(2, 1)?)?;
                let dy = q.slice(1, 1)?.sub(&q.slice(3, 1)?)?;
                dx.square().add(&dy.square())?.sqrt().recip().scale(-g * m1 * m2)
            }
            SystemSpec::ClothGrid { k, rest_length, .. } => {
                let (dx, dy) = self.edge_differences();
                let ex = q.matmul(&tape.constant(dx))?;
                let ey = q.matmul(&tape.constant(dy))?;
                let len = ex.square().add(&ey.square())?.sqrt();
                len.add_scalar(-rest_length).square().row_sum()?.scale(0.5 * k)
            }
        };
        kinetic.add(&potential)
    }
}

fn rows(t: &Tensor, n: usize) -> Result<usize> {
    match t.shape() {
        [b, m] if *m == n => Ok(*b),
        [m] if *m == n => Ok(1),
        s => Err(Error::ShapeMismatch { op: "system batch", left: s.to_vec(), right: vec![n] }),
    }
}

impl VectorField for SystemSpec {
    fn dof(&self) -> usize {
        SystemSpec::dof(self)
    }

    fn energies(&self, q: &Tensor, p: &Tensor) -> Result<Tensor> {
        let n = SystemSpec::dof(self);
        let b = rows(q, n)?;
        let mut out = Vec::with_capacity(b);
        for i in 0..b {
            out.push(self.true_hamiltonian(&q.data()[i * n..(i + 1) * n], &p.data()[i * n..(i + 1) * n])?);
        }
        Ok(Tensor::vector(&out))
    }

    fn time_derivatives(&self, q: &Tensor, p: &Tensor) -> Result<(Tensor, Tensor)> {
        let n = SystemSpec::dof(self);
        let b = rows(q, n)?;
        let (mut dq, mut dp) = (Vec::with_capacity(b * n), Vec::with_capacity(b * n));
        for i in 0..b {
            let (a, c) = self.true_derivatives(&q.data()[i * n..(i + 1) * n], &p.data()[i * n..(i + 1) * n])?;
            dq.extend(a);
            dp.extend(c);
        }
        Ok((Tensor::new(q.shape(), dq)?, Tensor::new(p.shape(), dp)?))
    }
}
