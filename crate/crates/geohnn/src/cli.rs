//! The `geohnn` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use geohnn_core::eval::{rollout, rom_rollout};
use geohnn_core::models::Activation;
use geohnn_core::systems::{generate_dataset, DatasetConfig, PhaseState, SystemSpec, VectorField};
use geohnn_core::training::{TrainConfig, LEARNING_RATES};
use geohnn_core::Tensor;
use rayon::prelude::*;
use serde::Deserialize;

use crate::checkpoint::{Checkpoint, DatasetRef, TrainedModel};
use crate::dataset::{parse_grid, read_dataset, system_by_name, write_dataset};
use crate::error::{CliError, Result};
use crate::experiment::{self, EvalSettings, ModelChoice, RunSpec};
use crate::io::{self, num};
use crate::metrics::{write_eval, write_history, EvalSummary, RunInfo};
use crate::report;
use crate::verify;

#[derive(Debug, Parser)]
#[command(name = "geohnn", version, about = "Learn Hamiltonian dynamics with geometric priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a benchmark system and write a dataset directory.
    GenData(GenData),
    /// Train one model per seed.
    Train(Train),
    /// Evaluate a checkpoint on a dataset split.
    Eval(Eval),
    /// Roll a checkpoint out from one initial state.
    Rollout(Rollout),
    /// Aggregate evaluated runs into summary.json.
    Report(Report),
    /// Run the property suite.
    Verify(Verify),
}

#[derive(Debug, Args)]
struct GenData {
    #[arg(long)]
    system: String,
    /// Cloth grid as WxH.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    n_traj: Option<usize>,
    #[arg(long)]
    t_span: Option<f64>,
    /// Stored sampling interval.
    #[arg(long)]
    dt: Option<f64>,
    /// RK4 step.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Train {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    model_kind: Option<String>,
    /// Comma-separated hidden widths.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Comma-separated autoencoder widths, full to latent.
    #[arg(long, value_delimiter = ',')]
    ae_dims: Option<Vec<usize>>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    rollout_steps: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train at every learning rate of the standard set and keep the best
    /// validation loss.
    #[arg(long)]
    lr_sweep: bool,
    /// Comma-separated seeds, trained in parallel.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Debug, Args)]
struct Eval {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory; defaults to the one the model was trained on.
    #[arg(long)]
    data: Option<PathBuf>,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    allow_train_split: bool,
    #[arg(long, default_value_t = 50.0)]
    horizon: f64,
    /// Rollout step; defaults to the training step.
    #[arg(long)]
    dt: Option<f64>,
    /// Defaults to `metrics/` next to the checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG charts.
    #[arg(long)]
    svg: bool,
}

#[derive(Debug, Args)]
struct Rollout {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Comma-separated `q` then `p`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    ic: Vec<f64>,
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Report {
    #[arg(long)]
    runs_dir: PathBuf,
    /// Defaults to `summary.json` inside the runs directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Verify {
    /// Only properties whose name or group contains this.
    #[arg(long)]
    filter: Option<String>,
    /// Deliberately break a model to check the suite catches it.
    #[arg(long)]
    inject_fault: Option<String>,
}

/// Process entry point; returns the exit code.
pub fn main() -> i32 {
    run(std::env::args_os())
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Rollout(a) => rollout_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Verify(a) => verify_cmd(a),
    }
}

fn gen_data(a: GenData) -> Result<()> {
    let grid = a.grid.as_deref().map(parse_grid).transpose()?;
    let system = system_by_name(&a.system, grid)?;
    let d = DatasetConfig::default();
    let cfg = DatasetConfig {
        n_traj: a.n_traj.unwrap_or(d.n_traj),
        t_span: a.t_span.unwrap_or(d.t_span),
        h: a.h.unwrap_or(d.h),
        dt: a.dt.unwrap_or(d.dt),
        seed: a.seed,
    };
    cfg.sampling().map_err(|e| CliError::usage(e.to_string()))?;
    if cfg.n_traj < 3 {
        return Err(CliError::usage("--n-traj must be at least 3 so every split is non-empty"));
    }
    let ds = generate_dataset(&system, &cfg)?;
    let manifest = write_dataset(&ds, &a.out)?;
    println!("{}", manifest.summary());
    Ok(())
}

/// An experiment file. Training hyper-parameters sit at the top level next
/// to the model description.
#[derive(Debug, Default, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
struct ExperimentConfig {
    /// Checked against the dataset when given.
    system: Option<String>,
    model_kind: Option<String>,
    hidden: Option<Vec<usize>>,
    activation: Option<Activation>,
    ae_dims: Option<Vec<usize>>,
    dataset: Option<PathBuf>,
    output: Option<PathBuf>,
    seeds: Option<Vec<u64>>,
    #[serde(flatten)]
    train: TrainConfig,
}

const DEFAULT_HIDDEN: [usize; 2] = [128, 128];

fn load_experiment(path: Option<&Path>) -> Result<(ExperimentConfig, serde_json::Value)> {
    match path {
        None => Ok((ExperimentConfig::default(), serde_json::Value::Object(Default::default()))),
        Some(p) => {
            let raw: serde_json::Value = io::read_json(p)?;
            let cfg = serde_json::from_value(raw.clone()).map_err(|e| CliError::format(p, e))?;
            Ok((cfg, raw))
        }
    }
}

fn train(a: Train) -> Result<()> {
    let (cfg, raw) = load_experiment(a.config.as_deref())?;
    let mut tc = cfg.train.clone();
    macro_rules! flag {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { tc.$f = v; })* };
    }
    flag!(lr, batch, max_epochs, patience, rollout_steps, dt);
    let model_name = a
        .model_kind
        .or(cfg.model_kind)
        .ok_or_else(|| CliError::usage("no model kind given (--model-kind or model-kind in the config)"))?;
    let model = ModelChoice::parse(&model_name)?;
    let data = a.data.or(cfg.dataset).ok_or_else(|| CliError::usage("no dataset given (--data or dataset in the config)"))?;
    let output = a.output.or(cfg.output).unwrap_or_else(|| PathBuf::from("runs"));
    let seeds = match (a.seeds, a.seed, cfg.seeds) {
        (Some(s), _, _) => s,
        (None, Some(s), _) => vec![s],
        (None, None, Some(s)) => s,
        // a config seed alone means a single run; otherwise `runs` consecutive seeds
        (None, None, None) if raw.get("seed").is_some() => vec![tc.seed],
        (None, None, None) => (0..tc.runs as u64).map(|i| tc.seed + i).collect(),
    };
    if seeds.is_empty() {
        return Err(CliError::usage("no seeds to train"));
    }
    tc.validate().map_err(|e| CliError::usage(e.to_string()))?;

    let (ds, manifest) = read_dataset(&data)?;
    if let Some(sys) = &cfg.system {
        if sys != ds.system.name() {
            return Err(CliError::usage(format!("config is for system {sys} but {} holds {}", data.display(), ds.system.name())));
        }
    }
    let mut spec = RunSpec::new(model, cfg.hidden.as_deref().unwrap_or(&DEFAULT_HIDDEN), tc.clone());
    if let Some(h) = a.hidden {
        spec.hidden = h;
    }
    if let Some(act) = cfg.activation {
        spec.activation = act;
    }
    if let Some(d) = a.ae_dims.or(cfg.ae_dims) {
        spec.ae_dims = d;
    }
    if matches!(model, ModelChoice::ReducedOrder(_)) && spec.ae_dims.is_empty() {
        return Err(CliError::usage("reduced-order models need ae-dims"));
    }
    let dataset = DatasetRef {
        path: data.display().to_string(),
        system: ds.system.clone(),
        config: manifest.config.clone(),
        train: ds.split.train.clone(),
    };

    let pool = io::thread_pool()?;
    let results: Vec<Result<String>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let run = if a.lr_sweep {
                    experiment::train_sweep(&spec, &ds, seed, &LEARNING_RATES)?
                } else {
                    experiment::train(&spec, &ds, seed)?
                };
                let dir = output.join(model.name()).join(format!("seed-{seed}"));
                io::create_dir(&dir)?;
                Checkpoint::new(model.name(), &run.model, seed, tc.dt, run.fit.best_epoch, dataset.clone())?
                    .save(&dir.join("checkpoint.json"))?;
                write_history(&dir.join("history.csv"), &run.fit.history)?;
                let info = RunInfo::new(model.name(), ds.system.name(), seed, run.lr, &run.fit);
                io::write_json(&dir.join("run.json"), &info)?;
                Ok(format!(
                    "{} seed {seed}: lr {:e}, {} epochs, best val {:.4e} at epoch {}, {} ({:.2}s)",
                    model.name(),
                    info.lr,
                    info.epochs,
                    info.best_val,
                    info.best_epoch,
                    info.stop,
                    run.seconds()
                ))
            })
            .collect()
    });
    for r in results {
        println!("{}", r?);
    }
    Ok(())
}

fn resolve_data(arg: Option<PathBuf>, ck: &Checkpoint) -> PathBuf {
    arg.unwrap_or_else(|| PathBuf::from(&ck.dataset.path))
}

fn eval(a: Eval) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let model = ck.restore(&a.checkpoint)?;
    let data = resolve_data(a.data, &ck);
    let (ds, _) = read_dataset(&data)?;
    let trajs = match a.split.as_str() {
        "test" => ds.test(),
        "val" => ds.val(),
        "train" => {
            let own = ds.system == ck.dataset.system && ds.config == ck.dataset.config && ds.split.train == ck.dataset.train;
            if own && !a.allow_train_split {
                return Err(CliError::usage(
                    "this is the checkpoint's own training split; pass --allow-train-split to evaluate on it anyway",
                ));
            }
            ds.train()
        }
        other => return Err(CliError::usage(format!("unknown split {other:?}; expected train, val or test"))),
    };
    if model.full_dof() != ds.system.dof() {
        return Err(CliError::usage(format!("model has dof {} but the dataset has {}", model.full_dof(), ds.system.dof())));
    }
    let settings = EvalSettings { horizon: a.horizon, dt: a.dt.unwrap_or(ck.dt), reference_h: ds.config.h };
    let m = io::thread_pool()?.install(|| experiment::evaluate(&model, &ds.system, &trajs, &settings))?;
    let summary = EvalSummary {
        model: ck.kind.clone(),
        system: ds.system.name().to_string(),
        seed: ck.seed,
        split: a.split.clone(),
        trajectories: trajs.len(),
        horizon: settings.horizon,
        dt: settings.dt,
        metrics: m.scalars.clone(),
    };
    let out = a.out.unwrap_or_else(|| a.checkpoint.with_file_name("metrics"));
    write_eval(&out, &summary, &m, a.svg)?;
    for (k, v) in &summary.metrics {
        println!("{k:<30} {v:.6e}");
    }
    Ok(())
}

fn rollout_cmd(a: Rollout) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let model = ck.restore(&a.checkpoint)?;
    let n = model.full_dof();
    if a.ic.len() != 2 * n {
        return Err(CliError::usage(format!("--ic needs {} values (q then p), got {}", 2 * n, a.ic.len())));
    }
    let dt = a.dt.unwrap_or(ck.dt);
    let s0 = PhaseState::new(a.ic[..n].to_vec(), a.ic[n..].to_vec());
    let r = match &model {
        TrainedModel::Hamiltonian(m) => rollout(m, &s0, dt, a.steps)?,
        TrainedModel::ReducedOrder(m) => rom_rollout(m, &s0, dt, a.steps)?,
    };
    if let Some(k) = r.diverged_at {
        eprintln!("warning: rollout diverged at step {k}");
    }
    let system: &SystemSpec = &ck.dataset.system;
    let (t, w) = (r.len(), 2 * n);
    let rows = r.states.data();
    let q = Tensor::from_fn(&[t, n], |i| rows[(i / n) * w + i % n]);
    let p = Tensor::from_fn(&[t, n], |i| rows[(i / n) * w + n + i % n]);
    let model_energy = match &model {
        TrainedModel::Hamiltonian(m) if m.kind().has_hamiltonian() && t > 0 => Some(m.energies(&q, &p)?),
        _ => None,
    };
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("q_{i}")));
    header.extend((1..=n).map(|i| format!("p_{i}")));
    header.extend(["model_energy".to_string(), "true_energy".to_string()]);
    let mut out = Vec::with_capacity(t);
    for (i, &time) in r.times.iter().enumerate() {
        let row = &rows[i * w..(i + 1) * w];
        let mut line = vec![num(time)];
        line.extend(row.iter().map(|&x| num(x)));
        line.push(model_energy.as_ref().map_or_else(String::new, |e| num(e.data()[i])));
        line.push(num(system.true_hamiltonian(&row[..n], &row[n..])?));
        out.push(line);
    }
    io::write_csv(&a.out, &header, out)?;
    println!("wrote {} states to {}", t, a.out.display());
    Ok(())
}

fn report_cmd(a: Report) -> Result<()> {
    let summary = report::summarize(&a.runs_dir)?;
    let out = a.out.unwrap_or_else(|| a.runs_dir.join("summary.json"));
    io::write_json(&out, &summary)?;
    print!("{}", report::timing_table(&summary));
    println!("wrote {}", out.display());
    Ok(())
}

fn verify_cmd(a: Verify) -> Result<()> {
    let fault = match a.inject_fault.as_deref() {
        None => None,
        Some(name) => Some(
            verify::Fault::from_name(name)
                .ok_or_else(|| CliError::usage(format!("unknown fault {name:?}; expected double-head-spd")))?,
        ),
    };
    let outcomes = verify::run(a.filter.as_deref(), fault);
    if outcomes.is_empty() {
        return Err(CliError::usage(format!("no property matches {:?}", a.filter.unwrap_or_default())));
    }
    print!("{}", verify::table(&outcomes));
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass()).map(|o| o.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("failing properties: {}", failed.join(", "))))
    }
}
