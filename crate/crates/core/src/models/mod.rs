//! Forward models mapping actions to predicted endpoints.

mod gp;
mod mlp;
mod standardize;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cablesim::{CableParams, SimConfig};
use crate::datasets::{Dataset, Generator};
use crate::geometry::PlanePoint;
use crate::trajgen::{Action, SystemParams};

pub use gp::{GaussianProcess, GpConfig, GpForward, GpHyper};
pub use mlp::{Dense, Mlp, MlpForward};
pub use standardize::Standardizer;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("need at least {needed} valid samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("input has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("kernel matrix is singular even with maximum jitter")]
    Singular,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    Format(String),
    #[error("simulator prediction failed: {0}")]
    Simulator(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub finetune_learning_rate: f64,
    pub finetune_epochs: usize,
    pub seed: u64,
    pub val_fraction: f64,
    pub hidden: Vec<usize>,
    pub min_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 200,
            finetune_learning_rate: 1e-4,
            finetune_epochs: 100,
            seed: 0,
            val_fraction: 0.1,
            hidden: vec![256, 256, 256],
            min_samples: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate >= 0.0 && self.finetune_learning_rate >= 0.0) {
            return Err(ModelError::InvalidConfig("learning rates must be ≥ 0".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(ModelError::InvalidConfig("val_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Feature rows and Cartesian endpoint targets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSet {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl TrainingSet {
    /// Valid transitions only.
    pub fn from_dataset(d: &Dataset) -> Self {
        let mut s = Self::default();
        for t in d.valid() {
            s.inputs.push(t.action.features());
            s.targets.push(vec![t.endpoint_xy.x, t.endpoint_xy.y]);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, |r| r.len())
    }
}

pub trait ForwardModel: Send + Sync {
    fn input_dim(&self) -> usize;

    fn predict_features(&self, x: &[f64]) -> Result<PlanePoint, ModelError>;

    fn predict(&self, action: &Action) -> Result<PlanePoint, ModelError> {
        self.predict_features(&action.features())
    }

    fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<PlanePoint>, ModelError> {
        xs.par_iter().map(|x| self.predict_features(x)).collect()
    }
}

/// The simulator itself used as a forward model (zero-noise rollout).
#[derive(Debug, Clone)]
pub struct SimulatorModel {
    pub params: CableParams,
    pub cfg: SimConfig,
    pub sys: SystemParams,
    pub input_dim: usize,
}

impl ForwardModel for SimulatorModel {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn predict_features(&self, x: &[f64]) -> Result<PlanePoint, ModelError> {
        let action = match x.len() {
            3 => Action::a1(x[0], x[1], x[2]),
            4 => Action::a2(x[0], x[1], x[2], x[3]),
            n => return Err(ModelError::DimensionMismatch { expected: self.input_dim, got: n }),
        };
        let g = Generator { params: &self.params, cfg: &self.cfg, sys: &self.sys, noise: None };
        g.execute(&action, 0).map(|(p, _)| p).map_err(|e| ModelError::Simulator(e.to_string()))
    }
}

/// Serialized model of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SavedModel {
    Mlp(MlpForward),
    Gp(GpForward),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    #[serde(default)]
    config_hash: Option<String>,
    model: SavedModel,
}

impl SavedModel {
    pub fn as_forward(&self) -> &dyn ForwardModel {
        match self {
            SavedModel::Mlp(m) => m,
            SavedModel::Gp(g) => g,
        }
    }

    pub fn to_json(&self, config_hash: Option<&str>) -> Result<String, ModelError> {
        let f = ModelFile {
            schema_version: MODEL_SCHEMA_VERSION,
            config_hash: config_hash.map(str::to_string),
            model: self.clone(),
        };
        Ok(serde_json::to_string(&f)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let f: ModelFile = serde_json::from_str(text)?;
        if f.schema_version != MODEL_SCHEMA_VERSION {
            return Err(ModelError::Format(format!("unsupported schema_version {}", f.schema_version)));
        }
        Ok(f.model)
    }

    pub fn save(&self, path: &Path, config_hash: Option<&str>) -> Result<(), ModelError> {
        fs::write(path, self.to_json(config_hash)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
