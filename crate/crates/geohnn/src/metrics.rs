//! Files written by `train` and `eval`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use geohnn_core::eval::MetricSeries;
use geohnn_core::training::{EpochRecord, FitResult, LossReport, StopReason};
use serde::{Deserialize, Serialize};

use crate::error::{IoContext, Result};
use crate::experiment::RunMetrics;
use crate::io::{self, num};
use crate::svg;

const TERMS: [&str; 6] = ["total", "multistep", "latent", "recon", "reg", "derivative_mse"];

fn terms(r: &LossReport) -> [f64; 6] {
    [r.total, r.multistep, r.latent, r.recon, r.reg, r.derivative_mse]
}

/// `epoch, train_*, val_*, seconds`; `seconds` is cumulative wall-clock.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut header = vec!["epoch".to_string()];
    for split in ["train", "val"] {
        header.extend(TERMS.iter().map(|t| format!("{split}_{t}")));
    }
    header.push("seconds".into());
    let mut total = 0.0;
    let rows = history.iter().map(|h| {
        total += h.seconds;
        let mut r = vec![h.epoch.to_string()];
        r.extend(terms(&h.train).iter().chain(&terms(&h.val)).map(|&x| num(x)));
        r.push(num(total));
        r
    });
    io::write_csv(path, &header, rows)
}

/// Per-epoch wall-clock totals read back from a history file.
pub fn read_history_seconds(path: &Path) -> Result<(usize, f64)> {
    let (_, rows) = io::read_csv(path)?;
    Ok((rows.len(), rows.last().and_then(|r| r.last().copied()).unwrap_or(0.0)))
}

/// Metadata of a training run, written next to its checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunInfo {
    pub model: String,
    pub system: String,
    pub seed: u64,
    pub lr: f64,
    pub epochs: usize,
    pub best_epoch: usize,
    #[serde(deserialize_with = "io::nullable")]
    pub best_val: f64,
    pub stop: String,
}

impl RunInfo {
    pub fn new(model: &str, system: &str, seed: u64, lr: f64, fit: &FitResult) -> Self {
        let stop = match &fit.stop {
            StopReason::MaxEpochs => "max-epochs".to_string(),
            StopReason::EarlyStopping => "early-stopping".to_string(),
            StopReason::Diverged { epoch, message } => format!("diverged at epoch {epoch}: {message}"),
        };
        RunInfo {
            model: model.into(),
            system: system.into(),
            seed,
            lr,
            epochs: fit.history.len(),
            best_epoch: fit.best_epoch,
            best_val: fit.best_val,
            stop,
        }
    }
}

/// Scalar results of one `eval`, the input of `report`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalSummary {
    pub model: String,
    pub system: String,
    pub seed: u64,
    pub split: String,
    pub trajectories: usize,
    pub horizon: f64,
    pub dt: f64,
    #[serde(deserialize_with = "io::nullable_map")]
    pub metrics: BTreeMap<String, f64>,
}

fn write_series(path: &Path, s: &MetricSeries) -> Result<()> {
    let rows = s.times.iter().zip(&s.values).map(|(&t, &v)| vec![num(t), num(v)]);
    io::write_csv(path, &["t".to_string(), s.name.clone()], rows)
}

fn write_chart(path: &Path, title: &str, s: &MetricSeries) -> Result<()> {
    let chart = svg::log_chart(title, "t", &[svg::Line { label: &s.name, x: &s.times, y: &s.values }]);
    fs::write(path, chart).at(path)
}

pub fn write_eval(dir: &Path, summary: &EvalSummary, m: &RunMetrics, charts: bool) -> Result<()> {
    io::create_dir(dir)?;
    write_series(&dir.join("trajectory_error.csv"), &m.trajectory_error)?;
    write_series(&dir.join("energy_drift.csv"), &m.energy_drift)?;
    if charts {
        let title = |what: &str| format!("{} on {}: {what}", summary.model, summary.system);
        write_chart(&dir.join("trajectory_error.svg"), &title("trajectory error"), &m.trajectory_error)?;
        write_chart(&dir.join("energy_drift.svg"), &title("energy drift"), &m.energy_drift)?;
    }
    if let Some(r) = &m.per_dof {
        let header: Vec<String> =
            ["dof", "position_prediction", "momentum_prediction", "position_reconstruction", "momentum_reconstruction"]
                .map(String::from)
                .to_vec();
        let rows = (0..r.position_prediction.len()).map(|i| {
            vec![
                (i + 1).to_string(),
                num(r.position_prediction[i]),
                num(r.momentum_prediction[i]),
                num(r.position_reconstruction[i]),
                num(r.momentum_reconstruction[i]),
            ]
        });
        io::write_csv(&dir.join("per_dof.csv"), &header, rows)?;
    }
    io::write_json(&dir.join("metrics.json"), summary)
}
