//! One training run and its evaluation, shared by the CLI and the
//! acceptance harness.

use std::collections::BTreeMap;
use std::time::Instant;

use geohnn_core::eval::{
    energy_drift, mean_series, per_dof_report, rollout, rom_rollout, trajectory_error, MetricSeries, PerDofReport,
    RolloutResult,
};
use geohnn_core::models::{
    Activation, AeConfig, AeKind, HamiltonianConfig, HamiltonianModel, ModelKind, ReducedOrderModel, RomConfig,
};
use geohnn_core::systems::{simulate_sampled, Dataset, SystemSpec, Trajectory, VectorField};
use geohnn_core::training::{fit, state_means, DerivativeSamples, FitResult, StopReason, TrainConfig, Windows};
use rayon::prelude::*;

use crate::checkpoint::TrainedModel;
use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelChoice {
    Hamiltonian(ModelKind),
    ReducedOrder(AeKind),
}

impl ModelChoice {
    pub const ALL: [ModelChoice; 7] = [
        ModelChoice::Hamiltonian(ModelKind::BaselineMlp),
        ModelChoice::Hamiltonian(ModelKind::VanillaHnn),
        ModelChoice::Hamiltonian(ModelKind::DoubleHeadHnn),
        ModelChoice::Hamiltonian(ModelKind::CholeskyHnn),
        ModelChoice::Hamiltonian(ModelKind::GeoHnn),
        ModelChoice::ReducedOrder(AeKind::Constrained),
        ModelChoice::ReducedOrder(AeKind::Vanilla),
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelChoice::Hamiltonian(k) => k.name(),
            ModelChoice::ReducedOrder(AeKind::Constrained) => "constrained-rom",
            ModelChoice::ReducedOrder(AeKind::Vanilla) => "vanilla-rom",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::from_name(s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|m| m.name()).collect();
            CliError::usage(format!("unknown model kind {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub model: ModelChoice,
    /// Hidden widths of every network, including the latent model of a ROM.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Autoencoder widths from the full to the latent dimension.
    pub ae_dims: Vec<usize>,
    pub train: TrainConfig,
}

impl RunSpec {
    pub fn new(model: ModelChoice, hidden: &[usize], train: TrainConfig) -> Self {
        RunSpec { model, hidden: hidden.to_vec(), activation: Activation::Tanh, ae_dims: Vec::new(), train }
    }

    pub fn with_ae_dims(mut self, dims: &[usize]) -> Self {
        self.ae_dims = dims.to_vec();
        self
    }
}

pub fn build_model(spec: &RunSpec, system: &SystemSpec, seed: u64) -> Result<TrainedModel> {
    match spec.model {
        ModelChoice::Hamiltonian(kind) => {
            let mut cfg = HamiltonianConfig::new(kind, system.dof()).with_hidden(&spec.hidden).with_seed(seed);
            cfg.activation = spec.activation;
            Ok(TrainedModel::Hamiltonian(HamiltonianModel::new(&cfg)?))
        }
        ModelChoice::ReducedOrder(kind) => {
            if spec.ae_dims.first() != Some(&system.dof()) {
                return Err(CliError::usage(format!(
                    "autoencoder widths {:?} must start at the system dof {}",
                    spec.ae_dims,
                    system.dof()
                )));
            }
            let ae = match kind {
                AeKind::Constrained => AeConfig::constrained(&spec.ae_dims),
                AeKind::Vanilla => AeConfig::vanilla(&spec.ae_dims),
            };
            let mut cfg = RomConfig::new(ae, &spec.hidden, seed);
            cfg.latent.activation = spec.activation;
            Ok(TrainedModel::ReducedOrder(ReducedOrderModel::new(&cfg)?))
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainedRun {
    pub model: TrainedModel,
    pub fit: FitResult,
    pub seed: u64,
    pub lr: f64,
}

impl TrainedRun {
    pub fn seconds(&self) -> f64 {
        self.fit.history.iter().map(|h| h.seconds).sum()
    }

    pub fn diverged(&self) -> bool {
        matches!(self.fit.stop, StopReason::Diverged { .. })
    }
}

/// Trains `spec` on the dataset's train split, early-stopping on its
/// validation split. The model and shuffling are both seeded by `seed`.
pub fn train(spec: &RunSpec, ds: &Dataset, seed: u64) -> Result<TrainedRun> {
    let cfg = TrainConfig { seed, ..spec.train.clone() };
    cfg.validate()?;
    let start = Instant::now();
    let clock = move || start.elapsed().as_secs_f64();
    let (train, val) = (ds.train(), ds.val());
    if train.is_empty() || val.is_empty() {
        return Err(CliError::usage("dataset has an empty train or validation split"));
    }
    let mut model = build_model(spec, &ds.system, seed)?;
    let fit = match &mut model {
        TrainedModel::Hamiltonian(m) => {
            let (t, v) = (DerivativeSamples::from_trajectories(&train)?, DerivativeSamples::from_trajectories(&val)?);
            fit(m, &t, &v, &cfg, &clock)?
        }
        TrainedModel::ReducedOrder(m) => {
            if (cfg.dt - ds.config.dt).abs() > 1e-12 * ds.config.dt {
                return Err(CliError::usage(format!(
                    "reduced-order training integrates between stored samples, so dt must be {} (got {})",
                    ds.config.dt, cfg.dt
                )));
            }
            let (qm, pm) = state_means(&train);
            m.set_data_means(&qm, &pm)?;
            let t = Windows::from_trajectories(&train, cfg.rollout_steps, cfg.window_stride)?;
            let v = Windows::from_trajectories(&val, cfg.rollout_steps, cfg.window_stride)?;
            fit(m, &t, &v, &cfg, &clock)?
        }
    };
    Ok(TrainedRun { model, fit, seed, lr: cfg.lr })
}

/// Trains once per learning rate and keeps the run with the lowest
/// validation loss; ties go to the earlier rate.
pub fn train_sweep(spec: &RunSpec, ds: &Dataset, seed: u64, lrs: &[f64]) -> Result<TrainedRun> {
    let mut best: Option<TrainedRun> = None;
    for &lr in lrs {
        let s = RunSpec { train: TrainConfig { lr, ..spec.train.clone() }, ..spec.clone() };
        let run = train(&s, ds, seed)?;
        if best.as_ref().is_none_or(|b| run.fit.best_val < b.fit.best_val) {
            best = Some(run);
        }
    }
    best.ok_or_else(|| CliError::usage("empty learning-rate sweep"))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSettings {
    /// Length of every rollout.
    pub horizon: f64,
    pub dt: f64,
    /// RK4 step of the reference solution.
    pub reference_h: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { horizon: 50.0, dt: 0.1, reference_h: 1e-3 }
    }
}

impl EvalSettings {
    fn steps(&self) -> Result<(usize, usize)> {
        let every = (self.dt / self.reference_h).round() as usize;
        if every == 0 || ((every as f64) * self.reference_h - self.dt).abs() > 1e-9 * self.dt || self.horizon <= 0.0 {
            return Err(CliError::usage("evaluation needs horizon > 0 and dt a multiple of the reference step"));
        }
        Ok((every, (self.horizon / self.dt).round() as usize))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    /// Means over trajectories at every time.
    pub trajectory_error: MetricSeries,
    pub energy_drift: MetricSeries,
    /// Reduced-order models only, on the stored test trajectories.
    pub per_dof: Option<PerDofReport>,
    pub diverged: usize,
    pub count: usize,
    pub scalars: BTreeMap<String, f64>,
}

struct Single {
    error: MetricSeries,
    drift: MetricSeries,
    diverged: bool,
}

fn evaluate_one(model: &TrainedModel, system: &SystemSpec, traj: &Trajectory, s: &EvalSettings) -> Result<Single> {
    let (every, steps) = s.steps()?;
    let ic = traj.state(0);
    let reference = simulate_sampled(system, &ic, s.reference_h, every, steps + 1)?;
    let (pred, energy_model): (_, Option<&dyn VectorField>) = match model {
        TrainedModel::Hamiltonian(m) => {
            let own = if m.kind().has_hamiltonian() { Some(m as &dyn VectorField) } else { None };
            (rollout(m, &ic, s.dt, steps)?, own)
        }
        TrainedModel::ReducedOrder(m) => (rom_rollout(m, &ic, s.dt, steps)?, None),
    };
    let r = RolloutResult::new(&pred, &reference, system, energy_model)?;
    Ok(Single { error: trajectory_error(&r), drift: energy_drift(&r), diverged: pred.diverged_at.is_some() })
}

/// Rolls the model out from the first state of each trajectory and compares
/// against a fresh reference solution of `settings.horizon`.
pub fn evaluate(model: &TrainedModel, system: &SystemSpec, trajs: &[&Trajectory], settings: &EvalSettings) -> Result<RunMetrics> {
    if trajs.is_empty() {
        return Err(CliError::usage("no trajectories to evaluate"));
    }
    let runs: Vec<Single> = trajs.par_iter().map(|t| evaluate_one(model, system, t, settings)).collect::<Result<_>>()?;
    let errors: Vec<MetricSeries> = runs.iter().map(|r| r.error.clone()).collect();
    let drifts: Vec<MetricSeries> = runs.iter().map(|r| r.drift.clone()).collect();
    let trajectory_error = mean_series(&errors)?;
    let energy_drift = mean_series(&drifts)?;
    let diverged = runs.iter().filter(|r| r.diverged).count();
    let per_dof = match model {
        TrainedModel::ReducedOrder(m) => Some(per_dof_report(m, trajs)?),
        TrainedModel::Hamiltonian(_) => None,
    };
    let mut scalars = BTreeMap::new();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    scalars.insert("trajectory-error-final".into(), trajectory_error.at_time(settings.horizon));
    scalars.insert("trajectory-error-mean".into(), mean(&trajectory_error.values));
    scalars.insert("energy-drift-final".into(), energy_drift.at_time(settings.horizon));
    scalars.insert("energy-drift-max".into(), energy_drift.values.iter().copied().fold(0.0, f64::max));
    scalars.insert("diverged".into(), diverged as f64);
    if let Some(r) = &per_dof {
        scalars.insert("position-prediction-mae".into(), r.position_prediction_stats.0);
        scalars.insert("momentum-prediction-mae".into(), r.momentum_prediction_stats.0);
        scalars.insert("position-reconstruction-mae".into(), r.position_reconstruction_stats.0);
        scalars.insert("momentum-reconstruction-mae".into(), r.momentum_reconstruction_stats.0);
    }
    Ok(RunMetrics { trajectory_error, energy_drift, per_dof, diverged, count: trajs.len(), scalars })
}
