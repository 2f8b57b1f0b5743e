//! Rollouts of trained models and the metrics computed on them.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::models::ReducedOrderModel;
use crate::systems::{PhaseState, SystemSpec, Trajectory, VectorField};
use crate::tensor::Tensor;
use crate::training::symplectic_euler_step;

/// Below this `|H(z̃(0))|` energy drift is reported in absolute terms.
pub const MIN_REFERENCE_ENERGY: f64 = 1e-12;

/// A predicted trajectory. When the integration fails at step `k`, the
/// series holds the `k` states before it and `diverged_at = Some(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub times: Vec<f64>,
    /// `[T, 2n]` rows `(q, p)`.
    pub states: Tensor,
    pub diverged_at: Option<usize>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn collect(rows: Vec<Vec<f64>>, dt: f64, diverged_at: Option<usize>) -> Result<Self> {
        let t = rows.len();
        let w = rows.first().map_or(0, |r| r.len());
        Ok(Rollout {
            times: (0..t).map(|k| k as f64 * dt).collect(),
            states: Tensor::new(&[t, w], rows.concat())?,
            diverged_at,
        })
    }
}

/// `steps = 0` gives the initial state alone.
fn check_steps(dt: f64, _steps: usize) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::invalid("rollout needs Δt > 0"));
    }
    Ok(())
}

fn row(q: &Tensor, p: &Tensor) -> Vec<f64> {
    [q.data(), p.data()].concat()
}

/// Symplectic Euler rollout of `field` from `s0`; `steps + 1` states unless
/// it diverges.
pub fn rollout(field: &impl VectorField, s0: &PhaseState, dt: f64, steps: usize) -> Result<Rollout> {
    check_steps(dt, steps)?;
    let n = s0.dof();
    let (mut q, mut p) = (Tensor::new(&[1, n], s0.q.clone())?, Tensor::new(&[1, n], s0.p.clone())?);
    let mut rows = alloc::vec![row(&q, &p)];
    let mut diverged = None;
    for k in 1..=steps {
        match symplectic_euler_step(field, &q, &p, dt) {
            Ok((q1, p1)) => {
                (q, p) = (q1, p1);
                rows.push(row(&q, &p));
            }
            Err(Error::ShapeMismatch { op, left, right }) => return Err(Error::ShapeMismatch { op, left, right }),
            Err(_) => {
                diverged = Some(k);
                break;
            }
        }
    }
    Rollout::collect(rows, dt, diverged)
}

/// Encodes `s0`, rolls out the latent model and decodes every state.
pub fn rom_rollout(rom: &ReducedOrderModel, s0: &PhaseState, dt: f64, steps: usize) -> Result<Rollout> {
    check_steps(dt, steps)?;
    let n = s0.dof();
    let (mut qc, mut pc) = rom.encode_states(&Tensor::new(&[1, n], s0.q.clone())?, &Tensor::new(&[1, n], s0.p.clone())?)?;
    let decode = |qc: &Tensor, pc: &Tensor| -> Result<Vec<f64>> {
        let (q, p) = rom.decode_states(qc, pc)?;
        if !q.is_finite() || !p.is_finite() {
            return Err(Error::NonFinite { op: "decode" });
        }
        Ok(row(&q, &p))
    };
    let mut rows = alloc::vec![decode(&qc, &pc)?];
    let mut diverged = None;
    for k in 1..=steps {
        match symplectic_euler_step(rom, &qc, &pc, dt).and_then(|(a, b)| Ok((decode(&a, &b)?, a, b))) {
            Ok((r, a, b)) => {
                (qc, pc) = (a, b);
                rows.push(r);
            }
            Err(_) => {
                diverged = Some(k);
                break;
            }
        }
    }
    Rollout::collect(rows, dt, diverged)
}

/// A prediction aligned with its reference.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutResult {
    pub times: Vec<f64>,
    pub predicted: Tensor,
    pub reference: Tensor,
    /// The model's own energy on its prediction, when it has one.
    pub model_energy: Option<Vec<f64>>,
    /// The true Hamiltonian on the predicted states.
    pub true_energy: Vec<f64>,
    pub diverged_at: Option<usize>,
}

fn take_rows(t: &Tensor, rows: usize) -> Result<Tensor> {
    let w = t.cols();
    Tensor::new(&[rows, w], t.data()[..rows * w].to_vec())
}

impl RolloutResult {
    /// Truncates both series to their common length. `model` supplies the
    /// model energy if it has one.
    pub fn new(pred: &Rollout, reference: &Trajectory, system: &SystemSpec, model: Option<&dyn VectorField>) -> Result<Self> {
        if pred.states.cols() != reference.states.cols() {
            return Err(Error::ShapeMismatch {
                op: "rollout comparison",
                left: pred.states.shape().to_vec(),
                right: reference.states.shape().to_vec(),
            });
        }
        let t = pred.len().min(reference.len());
        let predicted = take_rows(&pred.states, t)?;
        let n = predicted.cols() / 2;
        let split = |k: usize| {
            let r = &predicted.data()[k * 2 * n..(k + 1) * 2 * n];
            (r[..n].to_vec(), r[n..].to_vec())
        };
        let true_energy =
            (0..t).map(|k| {
                let (q, p) = split(k);
                system.true_hamiltonian(&q, &p).unwrap_or(f64::NAN)
            })
            .collect();
        let model_energy = match model {
            Some(m) => {
                let (q, p): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (0..t).map(split).unzip();
                let qt = Tensor::new(&[t, n], q.concat())?;
                let pt = Tensor::new(&[t, n], p.concat())?;
                m.energies(&qt, &pt).ok().map(Tensor::into_data)
            }
            None => None,
        };
        Ok(RolloutResult {
            times: reference.times[..t].to_vec(),
            predicted,
            reference: take_rows(&reference.states, t)?,
            model_energy,
            true_energy,
            diverged_at: pred.diverged_at,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricSeries {
    pub name: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl MetricSeries {
    pub fn new(name: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::invalid("metric times and values differ in length"));
        }
        Ok(MetricSeries { name: name.into(), times, values })
    }

    /// Value at the sample closest to `t`; infinite beyond the series.
    pub fn at_time(&self, t: f64) -> f64 {
        match self.times.iter().position(|&x| x >= t - 1e-9) {
            Some(i) => self.values[i],
            None => f64::INFINITY,
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

fn norm(x: &[f64]) -> f64 {
    libm::sqrt(x.iter().map(|v| v * v).sum())
}

/// `e(t) = ‖q̃ − q‖₂ + ‖p̃ − p‖₂`.
pub fn trajectory_error(r: &RolloutResult) -> MetricSeries {
    let w = r.predicted.cols();
    let n = w / 2;
    let values = (0..r.len())
        .map(|k| {
            let d: Vec<f64> = (0..w).map(|i| r.predicted.data()[k * w + i] - r.reference.data()[k * w + i]).collect();
            norm(&d[..n]) + norm(&d[n..])
        })
        .collect();
    MetricSeries { name: "trajectory_error".into(), times: r.times.clone(), values }
}

/// `|H(z̃(t)) − H(z̃(0))| / |H(z̃(0))|` under the true Hamiltonian. Reported
/// as an absolute difference (and named accordingly) when the initial
/// energy is nearly zero.
pub fn energy_drift(r: &RolloutResult) -> MetricSeries {
    drift_of(&r.true_energy, &r.times)
}

pub(crate) fn drift_of(energy: &[f64], times: &[f64]) -> MetricSeries {
    let e0 = energy.first().copied().unwrap_or(0.0);
    let absolute = libm::fabs(e0) <= MIN_REFERENCE_ENERGY;
    let scale = if absolute { 1.0 } else { libm::fabs(e0) };
    let values = energy.iter().map(|e| libm::fabs(e - e0) / scale).collect();
    let name = if absolute { "energy_drift_absolute" } else { "energy_drift" };
    MetricSeries { name: name.into(), times: times.to_vec(), values }
}

/// Mean over series at every time of the longest one. Series that stop
/// early (diverged rollouts) count as infinite afterwards.
pub fn mean_series(series: &[MetricSeries]) -> Result<MetricSeries> {
    let longest = series.iter().max_by_key(|s| s.times.len()).ok_or_else(|| Error::invalid("no series to average"))?;
    let count = series.len() as f64;
    let values = (0..longest.times.len())
        .map(|k| series.iter().map(|s| s.values.get(k).copied().unwrap_or(f64::INFINITY)).sum::<f64>() / count)
        .collect();
    Ok(MetricSeries { name: longest.name.clone(), times: longest.times.clone(), values })
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, libm::sqrt(var))
}

/// Per-coordinate mean absolute errors of a reduced-order model on held-out
/// trajectories, for prediction (latent rollout from the first state) and
/// pure reconstruction (decode∘encode of every state).
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PerDofReport {
    pub position_prediction: Vec<f64>,
    pub momentum_prediction: Vec<f64>,
    pub position_reconstruction: Vec<f64>,
    pub momentum_reconstruction: Vec<f64>,
    /// `(mean, std)` across trajectories of each trajectory's mean error.
    pub position_prediction_stats: (f64, f64),
    pub momentum_prediction_stats: (f64, f64),
    pub position_reconstruction_stats: (f64, f64),
    pub momentum_reconstruction_stats: (f64, f64),
    /// Trajectories whose rollout diverged (their prediction errors are
    /// infinite).
    pub diverged: usize,
}

struct MaeAccumulator {
    n: usize,
    per_dof: [Vec<f64>; 2],
    per_traj: [Vec<f64>; 2],
    count: usize,
}

impl MaeAccumulator {
    fn new(n: usize) -> Self {
        MaeAccumulator { n, per_dof: [alloc::vec![0.0; n], alloc::vec![0.0; n]], per_traj: [Vec::new(), Vec::new()], count: 0 }
    }

    /// Adds one trajectory: `[T, 2n]` predictions against `[T, 2n]` truth.
    fn add(&mut self, pred: &Tensor, truth: &Tensor) {
        let (n, t) = (self.n, pred.rows());
        let mut sums = [alloc::vec![0.0; n], alloc::vec![0.0; n]];
        for k in 0..t {
            for h in 0..2 {
                for i in 0..n {
                    let c = k * 2 * n + h * n + i;
                    sums[h][i] += libm::fabs(pred.data()[c] - truth.data()[c]);
                }
            }
        }
        for h in 0..2 {
            for i in 0..n {
                self.per_dof[h][i] += sums[h][i] / t as f64;
            }
            self.per_traj[h].push(sums[h].iter().sum::<f64>() / (t * n) as f64);
        }
        self.count += 1;
    }

    fn add_diverged(&mut self) {
        for h in 0..2 {
            for v in self.per_dof[h].iter_mut() {
                *v = f64::INFINITY;
            }
            self.per_traj[h].push(f64::INFINITY);
        }
        self.count += 1;
    }

    fn finish(self) -> ([Vec<f64>; 2], [(f64, f64); 2]) {
        let c = self.count.max(1) as f64;
        let dofs = self.per_dof.map(|v| v.into_iter().map(|x| x / c).collect());
        let stats = [mean_std(&self.per_traj[0]), mean_std(&self.per_traj[1])];
        (dofs, stats)
    }
}

pub fn per_dof_report(rom: &ReducedOrderModel, test: &[&Trajectory]) -> Result<PerDofReport> {
    let n = rom.full_dim();
    let mut pred = MaeAccumulator::new(n);
    let mut recon = MaeAccumulator::new(n);
    let mut diverged = 0;
    for traj in test {
        if traj.dof() != n {
            return Err(Error::ShapeMismatch { op: "per_dof_report", left: alloc::vec![traj.dof()], right: alloc::vec![n] });
        }
        let t = traj.len();
        let (q, p) = split_states(&traj.states);
        let (qc, pc) = rom.encode_states(&q, &p)?;
        let (qr, pr) = rom.decode_states(&qc, &pc)?;
        recon.add(&join_states(&qr, &pr)?, &traj.states);
        if t < 2 {
            pred.add(&join_states(&qr, &pr)?, &traj.states);
            continue;
        }
        let r = rom_rollout(rom, &traj.state(0), traj.dt(), t - 1)?;
        if r.diverged_at.is_some() {
            pred.add_diverged();
            diverged += 1;
        } else {
            pred.add(&r.states, &traj.states);
        }
    }
    let (pd, ps) = pred.finish();
    let (rd, rs) = recon.finish();
    let [position_prediction, momentum_prediction] = pd;
    let [position_reconstruction, momentum_reconstruction] = rd;
    Ok(PerDofReport {
        position_prediction,
        momentum_prediction,
        position_reconstruction,
        momentum_reconstruction,
        position_prediction_stats: ps[0],
        momentum_prediction_stats: ps[1],
        position_reconstruction_stats: rs[0],
        momentum_reconstruction_stats: rs[1],
        diverged,
    })
}

/// `[T, 2n]` rows into `([T, n], [T, n])`.
pub fn split_states(states: &Tensor) -> (Tensor, Tensor) {
    let (t, w) = (states.rows(), states.cols());
    let n = w / 2;
    let (mut q, mut p) = (Vec::with_capacity(t * n), Vec::with_capacity(t * n));
    for r in states.data().chunks(w) {
        q.extend_from_slice(&r[..n]);
        p.extend_from_slice(&r[n..]);
    }
    (Tensor::new(&[t, n], q).expect("sizes agree"), Tensor::new(&[t, n], p).expect("sizes agree"))
}

pub fn join_states(q: &Tensor, p: &Tensor) -> Result<Tensor> {
    let (t, n) = (q.rows(), q.cols());
    let mut out = Vec::with_capacity(2 * t * n);
    for k in 0..t {
        out.extend_from_slice(&q.data()[k * n..(k + 1) * n]);
        out.extend_from_slice(&p.data()[k * n..(k + 1) * n]);
    }
    Tensor::new(&[t, 2 * n], out)
}
