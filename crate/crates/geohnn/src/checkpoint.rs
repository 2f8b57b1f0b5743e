//! Model checkpoints: one JSON document holding the configuration and every
//! parameter by name. `serde_json` is built with `float_roundtrip`, so values
//! come back bit-identical.

use std::path::Path;

use geohnn_core::manifolds::{BiorthogonalPair, ParamValue, SpdPoint};
use geohnn_core::models::{HamiltonianConfig, HamiltonianModel, Parameterized, ReducedOrderModel, RomConfig};
use geohnn_core::systems::{DatasetConfig, SystemSpec, VectorField};
use geohnn_core::training::BIORTH_TOL;
use geohnn_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io;

pub const CHECKPOINT_SCHEMA: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelConfig {
    Hamiltonian(HamiltonianConfig),
    ReducedOrder(RomConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct StoredParam {
    pub name: String,
    /// `euclidean`, `spd` or `biorthogonal`.
    pub manifold: String,
    pub tensors: Vec<Tensor>,
}

/// Where the model was trained, so evaluation can refuse its training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DatasetRef {
    pub path: String,
    pub system: SystemSpec,
    pub config: DatasetConfig,
    pub train: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Checkpoint {
    pub schema_version: u64,
    pub kind: String,
    pub seed: u64,
    /// Integration step the model was trained with.
    pub dt: f64,
    pub best_epoch: usize,
    pub config: ModelConfig,
    pub dataset: DatasetRef,
    pub params: Vec<StoredParam>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainedModel {
    Hamiltonian(HamiltonianModel),
    ReducedOrder(ReducedOrderModel),
}

impl TrainedModel {
    pub fn params(&self) -> &geohnn_core::models::ParamSet {
        match self {
            TrainedModel::Hamiltonian(m) => m.params(),
            TrainedModel::ReducedOrder(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> &mut geohnn_core::models::ParamSet {
        match self {
            TrainedModel::Hamiltonian(m) => m.params_mut(),
            TrainedModel::ReducedOrder(m) => m.params_mut(),
        }
    }

    /// Phase-space dimension the model reads and writes.
    pub fn full_dof(&self) -> usize {
        match self {
            TrainedModel::Hamiltonian(m) => m.dof(),
            TrainedModel::ReducedOrder(m) => m.full_dim(),
        }
    }

    /// `None` for reduced-order models without learned dynamics.
    pub fn config(&self) -> Option<ModelConfig> {
        match self {
            TrainedModel::Hamiltonian(m) => Some(ModelConfig::Hamiltonian(m.config().clone())),
            TrainedModel::ReducedOrder(m) => m.config().cloned().map(ModelConfig::ReducedOrder),
        }
    }
}

fn store(p: &geohnn_core::manifolds::ManifoldParam) -> StoredParam {
    StoredParam { name: p.name.clone(), manifold: p.value.kind().to_string(), tensors: p.tensors().into_iter().cloned().collect() }
}

fn value_of(p: &StoredParam, path: &Path) -> Result<ParamValue> {
    let bad = |m: String| CliError::format(path, format!("parameter {}: {m}", p.name));
    // re-validates shapes, which deserialisation does not
    let mut ts = p.tensors.iter().map(|t| Tensor::new(t.shape(), t.data().to_vec()));
    let mut next = || ts.next().ok_or_else(|| bad("missing tensor".into()))?.map_err(|e| bad(e.to_string()));
    let v = match p.manifold.as_str() {
        "euclidean" => ParamValue::Euclidean(next()?),
        "spd" => ParamValue::Spd(SpdPoint::new(next()?).map_err(|e| bad(e.to_string()))?),
        "biorthogonal" => {
            let (phi, psi) = (next()?, next()?);
            ParamValue::Biorthogonal(BiorthogonalPair::from_exact(phi, psi, BIORTH_TOL).map_err(|e| bad(e.to_string()))?)
        }
        other => return Err(bad(format!("unknown manifold {other:?}"))),
    };
    Ok(v)
}

impl Checkpoint {
    pub fn new(kind: &str, model: &TrainedModel, seed: u64, dt: f64, best_epoch: usize, dataset: DatasetRef) -> Result<Self> {
        let config = model.config().ok_or_else(|| CliError::usage("only models with learned dynamics can be saved"))?;
        Ok(Checkpoint {
            schema_version: CHECKPOINT_SCHEMA,
            kind: kind.to_string(),
            seed,
            dt,
            best_epoch,
            config,
            dataset,
            params: model.params().iter().map(store).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    /// Refuses other schema versions before looking at anything else.
    pub fn load(path: &Path) -> Result<Self> {
        let value: serde_json::Value = io::read_json(path)?;
        let found = value.get("schema-version").and_then(serde_json::Value::as_u64);
        match found {
            Some(CHECKPOINT_SCHEMA) => serde_json::from_value(value).map_err(|e| CliError::format(path, e)),
            Some(found) => Err(CliError::Schema { path: path.to_path_buf(), found, expected: CHECKPOINT_SCHEMA }),
            None => Err(CliError::format(path, "no schema-version field")),
        }
    }

    /// Rebuilds the model from its configuration and overwrites every
    /// parameter with the stored value.
    pub fn restore(&self, path: &Path) -> Result<TrainedModel> {
        let mut model = match &self.config {
            ModelConfig::Hamiltonian(c) => TrainedModel::Hamiltonian(HamiltonianModel::new(c)?),
            ModelConfig::ReducedOrder(c) => TrainedModel::ReducedOrder(ReducedOrderModel::new(c)?),
        };
        let set = model.params_mut();
        if set.len() != self.params.len() {
            return Err(CliError::format(path, format!("{} parameters stored, model has {}", self.params.len(), set.len())));
        }
        for p in &self.params {
            let i = set.find(&p.name).ok_or_else(|| CliError::format(path, format!("unknown parameter {}", p.name)))?;
            set.set_value(i, value_of(p, path)?).map_err(|e| CliError::format(path, e))?;
        }
        Ok(model)
    }
}
