//! Aggregation of many runs into `summary.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use geohnn_core::eval::mean_std;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io;
use crate::metrics::{read_history_seconds, EvalSummary, RunInfo};

/// Non-finite means (diverged runs) serialise as `null`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    #[serde(deserialize_with = "io::nullable")]
    pub mean: f64,
    #[serde(deserialize_with = "io::nullable")]
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Stat { mean, std, n: values.len() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Timing {
    pub runs: usize,
    pub seconds: Stat,
    pub seconds_per_epoch: Stat,
    pub diverged_runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Group {
    pub system: String,
    pub model: String,
    pub metrics: BTreeMap<String, Stat>,
    pub timing: Option<Timing>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Summary {
    pub generated_at: String,
    pub groups: Vec<Group>,
}

impl Summary {
    pub fn group(&self, system: &str, model: &str) -> Option<&Group> {
        self.groups.iter().find(|g| g.system == system && g.model == model)
    }
}

fn files_named(root: &Path, name: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::format(root, e))?;
        if entry.file_type().is_file() && entry.file_name() == name {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

type Key = (String, String);

/// Collects every `metrics.json` (from `eval`) and every `run.json` with its
/// `history.csv` (from `train`) below `runs_dir`.
pub fn summarize(runs_dir: &Path) -> Result<Summary> {
    let mut metrics: BTreeMap<Key, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for path in files_named(runs_dir, "metrics.json")? {
        let s: EvalSummary = io::read_json(&path)?;
        let group = metrics.entry((s.system, s.model)).or_default();
        for (k, v) in s.metrics {
            group.entry(k).or_default().push(v);
        }
    }
    let mut timing: BTreeMap<Key, (Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
    for path in files_named(runs_dir, "run.json")? {
        let info: RunInfo = io::read_json(&path)?;
        let history = path.with_file_name("history.csv");
        let (epochs, seconds) = if history.exists() { read_history_seconds(&history)? } else { (0, 0.0) };
        let t = timing.entry((info.system, info.model)).or_default();
        t.0.push(seconds);
        t.1.push(if epochs > 0 { seconds / epochs as f64 } else { 0.0 });
        t.2 += usize::from(info.stop.starts_with("diverged"));
    }
    if metrics.is_empty() && timing.is_empty() {
        return Err(CliError::usage(format!("no run.json or metrics.json below {}", runs_dir.display())));
    }
    let keys: std::collections::BTreeSet<Key> = metrics.keys().chain(timing.keys()).cloned().collect();
    let groups = keys
        .into_iter()
        .map(|key| {
            let m = metrics.get(&key).map(|g| g.iter().map(|(k, v)| (k.clone(), Stat::of(v))).collect()).unwrap_or_default();
            let t = timing.get(&key).map(|(s, spe, div)| Timing {
                runs: s.len(),
                seconds: Stat::of(s),
                seconds_per_epoch: Stat::of(spe),
                diverged_runs: *div,
            });
            Group { system: key.0, model: key.1, metrics: m, timing: t }
        })
        .collect();
    Ok(Summary { generated_at: chrono::Utc::now().to_rfc3339(), groups })
}

/// Wall-clock table, one row per model, plus the slow-down of the geometric
/// model relative to the MLP baseline where both exist.
pub fn timing_table(s: &Summary) -> String {
    let mut out = format!("{:<22} {:<18} {:>5} {:>12} {:>14} {:>9}\n", "system", "model", "runs", "seconds", "s/epoch", "diverged");
    for g in &s.groups {
        if let Some(t) = &g.timing {
            out.push_str(&format!(
                "{:<22} {:<18} {:>5} {:>12.3} {:>14.5} {:>9}\n",
                g.system, g.model, t.runs, t.seconds.mean, t.seconds_per_epoch.mean, t.diverged_runs
            ));
        }
    }
    let systems: std::collections::BTreeSet<&str> = s.groups.iter().map(|g| g.system.as_str()).collect();
    for sys in systems {
        let per_epoch = |m: &str| s.group(sys, m).and_then(|g| g.timing.as_ref()).map(|t| t.seconds_per_epoch.mean);
        if let (Some(geo), Some(mlp)) = (per_epoch("geo-hnn"), per_epoch("baseline-mlp")) {
            if mlp > 0.0 {
                out.push_str(&format!("{sys}: geo-hnn takes {:.2}x the baseline MLP's time per epoch\n", geo / mlp));
            }
        }
    }
    out
}
