//! Dataset directories: `manifest.json` plus one CSV per trajectory.

use std::path::Path;

use geohnn_core::systems::{Dataset, DatasetConfig, Split, SystemSpec, Trajectory};
use geohnn_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io;

pub const DATASET_SCHEMA: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrajectoryEntry {
    pub file: String,
    pub seed: u64,
    pub samples: usize,
    pub diverged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Manifest {
    pub schema_version: u64,
    pub system: SystemSpec,
    pub dof: usize,
    pub config: DatasetConfig,
    pub split: Split,
    pub trajectories: Vec<TrajectoryEntry>,
}

impl Manifest {
    pub fn summary(&self) -> String {
        let diverged = self.trajectories.iter().filter(|t| t.diverged).count();
        format!(
            "system {} (dof {}), {} trajectories of {} samples (h {}, dt {}, seed {}), split {}/{}/{}, {} diverged",
            self.system.name(),
            self.dof,
            self.trajectories.len(),
            self.trajectories.first().map_or(0, |t| t.samples),
            self.config.h,
            self.config.dt,
            self.config.seed,
            self.split.train.len(),
            self.split.val.len(),
            self.split.test.len(),
            diverged
        )
    }
}

fn header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for prefix in ["q", "p", "dq", "dp"] {
        h.extend((1..=n).map(|i| format!("{prefix}_{i}")));
    }
    h.push("energy".into());
    h
}

fn trajectory_rows(t: &Trajectory) -> impl Iterator<Item = Vec<String>> + '_ {
    let w = 2 * t.dof();
    (0..t.len()).map(move |k| {
        let mut row = vec![io::num(t.times[k])];
        row.extend(t.states.data()[k * w..(k + 1) * w].iter().map(|&x| io::num(x)));
        row.extend(t.derivs.data()[k * w..(k + 1) * w].iter().map(|&x| io::num(x)));
        row.push(io::num(t.energy[k]));
        row
    })
}

pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<Manifest> {
    io::create_dir(dir)?;
    let n = ds.system.dof();
    let mut entries = Vec::with_capacity(ds.trajectories.len());
    for (i, t) in ds.trajectories.iter().enumerate() {
        let file = format!("traj_{i:04}.csv");
        io::write_csv(&dir.join(&file), &header(n), trajectory_rows(t))?;
        entries.push(TrajectoryEntry { file, seed: t.seed, samples: t.len(), diverged: t.diverged });
    }
    let manifest = Manifest {
        schema_version: DATASET_SCHEMA,
        system: ds.system.clone(),
        dof: n,
        config: ds.config.clone(),
        split: ds.split.clone(),
        trajectories: entries,
    };
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn read_trajectory(path: &Path, entry: &TrajectoryEntry, n: usize) -> Result<Trajectory> {
    let (head, rows) = io::read_csv(path)?;
    if head != header(n) {
        return Err(CliError::format(path, format!("unexpected header for {n} degrees of freedom")));
    }
    let w = 2 * n;
    let (mut times, mut states, mut derivs, mut energy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for r in &rows {
        times.push(r[0]);
        states.extend_from_slice(&r[1..1 + w]);
        derivs.extend_from_slice(&r[1 + w..1 + 2 * w]);
        energy.push(r[1 + 2 * w]);
    }
    let t = rows.len();
    if t != entry.samples {
        return Err(CliError::format(path, format!("{t} samples, manifest says {}", entry.samples)));
    }
    Ok(Trajectory {
        times,
        states: Tensor::new(&[t, w], states)?,
        derivs: Tensor::new(&[t, w], derivs)?,
        energy,
        seed: entry.seed,
        diverged: entry.diverged,
    })
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let m: Manifest = io::read_json(&path)?;
    if m.schema_version != DATASET_SCHEMA {
        return Err(CliError::format(&path, format!("dataset schema version {} is not supported", m.schema_version)));
    }
    Ok(m)
}

pub fn read_dataset(dir: &Path) -> Result<(Dataset, Manifest)> {
    let m = read_manifest(dir)?;
    let trajectories = m
        .trajectories
        .iter()
        .map(|e| read_trajectory(&dir.join(&e.file), e, m.dof))
        .collect::<Result<Vec<_>>>()?;
    let ds = Dataset { system: m.system.clone(), config: m.config.clone(), trajectories, split: m.split.clone() };
    Ok((ds, m))
}

/// `"4x4"` as `(4, 4)`.
pub fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let bad = || CliError::usage(format!("grid must look like 4x4, got {s:?}"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

/// The system called `name`, or a usage error listing the closest names.
pub fn system_by_name(name: &str, grid: Option<(usize, usize)>) -> Result<SystemSpec> {
    if let Some(spec) = SystemSpec::from_name(name) {
        return Ok(match (spec, grid) {
            (SystemSpec::ClothGrid { .. }, Some((w, h))) => SystemSpec::cloth(w, h),
            (_, Some(_)) => return Err(CliError::usage("--grid only applies to the cloth system")),
            (spec, None) => spec,
        });
    }
    let mut near: Vec<(f64, &str)> =
        SystemSpec::NAMES.iter().map(|&n| (strsim::normalized_damerau_levenshtein(name, n), n)).collect();
    near.sort_by(|a, b| b.0.total_cmp(&a.0));
    let close: Vec<&str> = near.iter().filter(|(s, _)| *s >= 0.4).map(|&(_, n)| n).collect();
    let hint = if close.is_empty() { SystemSpec::NAMES.to_vec() } else { close };
    Err(CliError::usage(format!("unknown system {name:?}; did you mean: {}?", hint.join(", "))))
}
