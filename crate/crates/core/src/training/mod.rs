//! Loss functions, the symplectic integrator used inside rollout losses, and
//! the optimizer loop with early stopping.

mod data;
mod loss;

use alloc::string::{String, ToString};
use alloc::vec::Vec;

pub use data::{state_means, DerivativeSamples, Samples, Windows};
pub use loss::{
    derivative_mse, loss_derivative_matching, loss_reg, rom_terms, sq_error, symplectic_euler_step,
    symplectic_euler_var, RomTerms, SplitField,
};

use crate::autodiff::{grad, Tape, Var};
use crate::error::{Error, Result};
use crate::manifolds::{riemannian_adam_step, AdamHyper};
use crate::models::{Bound, HamiltonianModel, ParamSet, Parameterized, ReducedOrderModel};
use crate::rng;
use crate::tensor::Tensor;

/// Learning rates tried per model and dataset.
pub const LEARNING_RATES: [f64; 5] = [1e-3, 5e-4, 1e-4, 5e-5, 1e-5];

/// Largest tolerated `‖ΨᵀΦ − I‖_F` after an epoch.
pub const BIORTH_TOL: f64 = 1e-8;

const SHUFFLE_STREAM: u64 = 0x5348_5546;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct LossWeights {
    pub multistep: f64,
    pub latent: f64,
    pub recon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { multistep: 1.0, latent: 1.0, recon: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Relative improvement needed to reset the patience counter.
    pub min_delta: f64,
    pub weight_decay: f64,
    /// `λ` of the `ℓ₂` term.
    pub reg_coeff: f64,
    /// `N`, the number of integration steps in a rollout window.
    pub rollout_steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub runs: usize,
    pub weights: LossWeights,
    /// Spacing between the starts of consecutive training windows.
    pub window_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch: 128,
            max_epochs: 1000,
            patience: 50,
            min_delta: 1e-6,
            weight_decay: 5e-4,
            reg_coeff: 0.0,
            rollout_steps: 8,
            dt: 0.1,
            seed: 0,
            runs: 5,
            weights: LossWeights::default(),
            window_stride: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.batch > 0
            && self.max_epochs > 0
            && self.patience > 0
            && self.min_delta >= 0.0
            && self.weight_decay >= 0.0
            && self.reg_coeff >= 0.0
            && self.rollout_steps > 0
            && self.dt > 0.0
            && self.runs > 0
            && self.window_stride > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(alloc::format!("invalid training configuration: {self:?}")))
        }
    }

    fn hyper(&self) -> AdamHyper {
        AdamHyper { lr: self.lr, weight_decay: self.weight_decay, ..AdamHyper::default() }
    }
}

/// Loss terms of one evaluation; terms a model does not use are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct LossReport {
    pub total: f64,
    pub multistep: f64,
    pub latent: f64,
    pub recon: f64,
    pub reg: f64,
    pub derivative_mse: f64,
}

impl LossReport {
    /// Everything but the regularizer; this drives early stopping.
    pub fn data_loss(&self) -> f64 {
        self.total - self.reg
    }

    fn accumulate(&mut self, other: &LossReport, w: f64) {
        self.total += w * other.total;
        self.multistep += w * other.multistep;
        self.latent += w * other.latent;
        self.recon += w * other.recon;
        self.reg += w * other.reg;
        self.derivative_mse += w * other.derivative_mse;
    }
}

/// A model together with the loss it is trained on.
pub trait Objective: Parameterized {
    type Data: Samples;

    /// Loss on `data` with parameters bound as `b`. `total` in the report is
    /// the value of the returned variable.
    fn loss(&self, b: &Bound, data: &Self::Data, cfg: &TrainConfig) -> Result<(Var, LossReport)>;
}

fn item_or_zero(v: &Option<Var>) -> f64 {
    v.as_ref().map_or(0.0, |v| v.item())
}

fn with_reg(data_term: Var, reg: &Option<Var>) -> Result<Var> {
    match reg {
        Some(r) => data_term.add(r),
        None => Ok(data_term),
    }
}

impl Objective for HamiltonianModel {
    type Data = DerivativeSamples;

    fn loss(&self, b: &Bound, data: &DerivativeSamples, cfg: &TrainConfig) -> Result<(Var, LossReport)> {
        let tape = b.flat().first().map(|v| v.tape().clone()).ok_or_else(|| Error::invalid("no parameters"))?;
        let batch = [&data.q, &data.p, &data.qdot, &data.pdot].map(|t| tape.constant(t.clone()));
        let mse = loss_derivative_matching(self.arch(), b, [&batch[0], &batch[1], &batch[2], &batch[3]])?;
        let reg = loss_reg(self.params(), b, cfg.reg_coeff);
        let total = with_reg(mse.clone(), &reg)?;
        let report =
            LossReport { total: total.item(), derivative_mse: mse.item(), reg: item_or_zero(&reg), ..LossReport::default() };
        Ok((total, report))
    }
}

impl Objective for ReducedOrderModel {
    type Data = Windows;

    fn loss(&self, b: &Bound, data: &Windows, cfg: &TrainConfig) -> Result<(Var, LossReport)> {
        let tape = b.flat().first().map(|v| v.tape().clone()).ok_or_else(|| Error::invalid("no parameters"))?;
        let (qs, ps) = data.columns();
        let q: Vec<Var> = qs.into_iter().map(|t| tape.constant(t)).collect();
        let p: Vec<Var> = ps.into_iter().map(|t| tape.constant(t)).collect();
        let terms = rom_terms(self, b, &q, &p, cfg.dt)?;
        let w = cfg.weights;
        let data_term = terms
            .multistep
            .scale(w.multistep)
            .add(&terms.latent.scale(w.latent))?
            .add(&terms.recon.scale(w.recon))?;
        let reg = loss_reg(self.params(), b, cfg.reg_coeff);
        let total = with_reg(data_term, &reg)?;
        let report = LossReport {
            total: total.item(),
            multistep: terms.multistep.item(),
            latent: terms.latent.item(),
            recon: terms.recon.item(),
            reg: item_or_zero(&reg),
            derivative_mse: 0.0,
        };
        Ok((total, report))
    }
}

/// Loss and per-parameter Euclidean gradients on one batch.
pub fn loss_and_grad<M: Objective>(model: &M, data: &M::Data, cfg: &TrainConfig) -> Result<(LossReport, Vec<Vec<Tensor>>)> {
    let tape = Tape::unchecked();
    let b = model.params().bind(&tape, true);
    let (loss, report) = model.loss(&b, data, cfg)?;
    let flat = grad(&loss, &b.flat())?;
    Ok((report, model.params().split_grads(flat)))
}

/// The loss with the parameter tensors replaced by `tensors` (laid out as
/// [`ParamSet::tensors`]); no manifold constraint is imposed on them.
pub fn loss_with_tensors<M: Objective>(model: &M, data: &M::Data, cfg: &TrainConfig, tensors: &[Vec<Tensor>]) -> Result<f64> {
    let tape = Tape::unchecked();
    let b = Bound::from_tensors(&tape, tensors, false);
    Ok(model.loss(&b, data, cfg)?.0.item())
}

/// Loss over all of `data` in chunks of `cfg.batch`, parameters held
/// constant.
pub fn evaluate<M: Objective>(model: &M, data: &M::Data, cfg: &TrainConfig) -> Result<LossReport> {
    let n = data.len();
    if n == 0 {
        return Err(Error::invalid("evaluation on an empty set"));
    }
    let mut total = LossReport::default();
    let mut start = 0;
    while start < n {
        let idx: Vec<usize> = (start..(start + cfg.batch).min(n)).collect();
        let tape = Tape::unchecked();
        let b = model.params().bind(&tape, false);
        let (_, r) = model.loss(&b, &data.select(&idx), cfg)?;
        total.accumulate(&r, idx.len() as f64 / n as f64);
        start += cfg.batch;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train: LossReport,
    pub val: LossReport,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
    /// Training hit a non-finite loss or a numerical failure; the model holds
    /// the best checkpoint seen before it.
    Diverged { epoch: usize, message: String },
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitResult {
    pub history: Vec<EpochRecord>,
    /// 0 when no epoch completed.
    pub best_epoch: usize,
    pub best_val: f64,
    pub stop: StopReason,
}

fn is_numerical(e: &Error) -> bool {
    matches!(
        e,
        Error::NonFinite { .. }
            | Error::Singular { .. }
            | Error::RetractionFailed { .. }
            | Error::NotSpd(_)
            | Error::Diverged { .. }
            | Error::SingularConfiguration(_)
    )
}

fn check_params(set: &ParamSet) -> Result<()> {
    set.iter().try_for_each(|p| p.check(BIORTH_TOL))
}

fn train_epoch<M: Objective>(model: &mut M, train: &M::Data, cfg: &TrainConfig, order: &[usize]) -> Result<LossReport> {
    let hyper = cfg.hyper();
    let mut report = LossReport::default();
    for chunk in order.chunks(cfg.batch) {
        let (r, grads) = loss_and_grad(model, &train.select(chunk), cfg)?;
        if !r.total.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { op: "training loss" });
        }
        // stage every update first so a failing manifold step leaves the model intact
        let mut next = model.params().clone();
        for (p, g) in next.iter_mut().zip(&grads) {
            riemannian_adam_step(p, g, &hyper)?;
        }
        *model.params_mut() = next;
        report.accumulate(&r, chunk.len() as f64 / order.len() as f64);
    }
    check_params(model.params())?;
    Ok(report)
}

/// Trains `model` in place. On return it holds the parameters of the best
/// validation epoch. `clock` returns seconds from any fixed origin.
pub fn fit<M: Objective + Clone>(
    model: &mut M,
    train: &M::Data,
    val: &M::Data,
    cfg: &TrainConfig,
    clock: &dyn Fn() -> f64,
) -> Result<FitResult> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation sets must be nonempty"));
    }
    let mut shuffle = rng::stream(cfg.seed, SHUFFLE_STREAM);
    let mut best = (model.params().clone(), f64::INFINITY, 0usize);
    let mut history = Vec::new();
    let mut since = 0;
    let mut stop = StopReason::MaxEpochs;
    for epoch in 1..=cfg.max_epochs {
        let t0 = clock();
        let order = rng::permutation(&mut shuffle, train.len());
        let step = train_epoch(model, train, cfg, &order).and_then(|tr| {
            let va = evaluate(model, val, cfg)?;
            if va.total.is_finite() {
                Ok((tr, va))
            } else {
                Err(Error::NonFinite { op: "validation loss" })
            }
        });
        let (tr, va) = match step {
            Ok(r) => r,
            Err(e) if is_numerical(&e) => {
                stop = StopReason::Diverged { epoch, message: e.to_string() };
                break;
            }
            Err(e) => return Err(e),
        };
        history.push(EpochRecord { epoch, train: tr, val: va, seconds: clock() - t0 });
        let v = va.data_loss();
        if v < best.1 * (1.0 - cfg.min_delta) {
            best = (model.params().clone(), v, epoch);
            since = 0;
        } else {
            since += 1;
            if since >= cfg.patience {
                stop = StopReason::EarlyStopping;
                break;
            }
        }
    }
    *model.params_mut() = best.0;
    Ok(FitResult { history, best_epoch: best.2, best_val: best.1, stop })
}

/// Largest `|analytic − numeric| / (|analytic| + floor)` over every parameter
/// entry, with a five-point central difference of step `h` on the raw
/// parameter tensors.
pub fn check_loss_gradient<M: Objective>(model: &M, data: &M::Data, cfg: &TrainConfig, h: f64, floor: f64) -> Result<f64> {
    let (_, analytic) = loss_and_grad(model, data, cfg)?;
    let base = model.params().tensors();
    let mut worst: f64 = 0.0;
    for (i, group) in base.iter().enumerate() {
        for (j, t) in group.iter().enumerate() {
            for k in 0..t.len() {
                let at = |d: f64| {
                    let mut ts = base.clone();
                    ts[i][j].data_mut()[k] += d;
                    loss_with_tensors(model, data, cfg, &ts)
                };
                let num = (-at(2.0 * h)? + 8.0 * at(h)? - 8.0 * at(-h)? + at(-2.0 * h)?) / (12.0 * h);
                let a = analytic[i][j].data()[k];
                worst = worst.max(libm::fabs(a - num) / (libm::fabs(a) + floor));
            }
        }
    }
    Ok(worst)
}
