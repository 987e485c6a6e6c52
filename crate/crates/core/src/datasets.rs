//! Self-supervised (action, endpoint) datasets.
//!
//! Every executed action is stored together with wherever the endpoint came
//! to rest, as if that had been the target. The `real` dataset is a
//! stand-in for physical data: the same engine, run with action and initial
//! state noise (and usually different physics parameters).

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cablesim::{
    perturb_action, perturb_state, reset_state, rollout, CableParams, NoiseSpec, SimConfig, SimError,
};
use crate::geometry::{cartesian_to_polar, polar_to_cartesian, PlanePoint, PolarPoint};
use crate::provenance::{derive_seed, hash_json};
use crate::trajgen::{plan, Action, SystemParams, TrajError};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset is empty")]
    Empty,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Traj(#[from] TrajError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Tune,
    Sim,
    Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMeta {
    pub seed: u64,
    pub params_hash: String,
    pub sys_hash: String,
    pub settle_time: f64,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub action: Action,
    pub endpoint: PolarPoint,
    pub endpoint_xy: PlanePoint,
    pub meta: TransitionMeta,
    /// Set when the rollout failed; such rows carry no usable endpoint.
    #[serde(default, skip_serializing_if = "is_false")]
    pub invalid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: DatasetKind,
    pub transitions: Vec<Transition>,
    pub schema_version: u32,
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    dataset: DatasetKind,
    count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
}

/// Identifies the physical setup a transition was produced under.
pub fn setup_hash(cfg: &SimConfig, sys: &SystemParams) -> String {
    hash_json(&(sys, cfg))
}

/// Everything needed to produce (or replay) transitions.
#[derive(Debug, Clone)]
pub struct Generator<'a> {
    pub params: &'a CableParams,
    pub cfg: &'a SimConfig,
    pub sys: &'a SystemParams,
    /// Only for the stand-in for physical data.
    pub noise: Option<NoiseSpec>,
}

impl Generator<'_> {
    /// Runs one action with the noise drawn from `seed`.
    pub fn execute(&self, action: &Action, seed: u64) -> Result<(PlanePoint, f64), DatasetError> {
        let mut state = reset_state(self.cfg, self.sys)?;
        let mut executed = action.clone();
        if let Some(noise) = &self.noise {
            executed = perturb_action(action, noise, seed);
            state = perturb_state(&state, noise, derive_seed(seed, u64::MAX), self.cfg.segment_length());
        }
        let traj = plan(&executed, self.sys)?;
        let out = rollout(&state, &traj, self.params, self.cfg, self.sys.control_period)?;
        Ok((out.endpoint(), out.settle_time))
    }

    fn transition(&self, action: &Action, seed: u64, params_hash: &str, sys_hash: &str) -> Transition {
        let meta = |settle_time| TransitionMeta {
            seed,
            params_hash: params_hash.to_string(),
            sys_hash: sys_hash.to_string(),
            settle_time,
        };
        match self.execute(action, seed) {
            Ok((xy, settle_time)) => Transition {
                action: action.clone(),
                endpoint: cartesian_to_polar(xy),
                endpoint_xy: xy,
                meta: meta(settle_time),
                invalid: false,
            },
            Err(e) => {
                log::warn!("transition with seed {seed} marked invalid: {e}");
                Transition {
                    action: action.clone(),
                    endpoint: PolarPoint::new(0.0, 0.0),
                    endpoint_xy: PlanePoint::ORIGIN,
                    meta: meta(0.0),
                    invalid: true,
                }
            }
        }
    }

    /// One rollout per action from the reset state. Failed rollouts are kept
    /// with `invalid` set.
    pub fn generate(&self, name: DatasetKind, actions: &[Action], seed: u64) -> Result<Dataset, DatasetError> {
        if actions.is_empty() {
            return Err(DatasetError::Empty);
        }
        let params_hash = hash_json(self.params);
        let sys_hash = setup_hash(self.cfg, self.sys);
        let transitions = actions
            .par_iter()
            .enumerate()
            .map(|(i, a)| self.transition(a, derive_seed(seed, i as u64), &params_hash, &sys_hash))
            .collect();
        Ok(Dataset { name, transitions, schema_version: DATASET_SCHEMA_VERSION })
    }

    /// Re-executes a stored transition with its recorded seed.
    pub fn replay(&self, t: &Transition) -> Result<PlanePoint, DatasetError> {
        Ok(self.execute(&t.action, t.meta.seed)?.0)
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Transitions usable for training.
    pub fn valid(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(|t| !t.invalid)
    }

    pub fn valid_count(&self) -> usize {
        self.valid().count()
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.transitions.is_empty() {
            return Err(DatasetError::Empty);
        }
        let sys_hash = &self.transitions[0].meta.sys_hash;
        for (i, t) in self.transitions.iter().enumerate() {
            check_transition(t).map_err(|m| DatasetError::Invalid(format!("transition {i}: {m}")))?;
            if &t.meta.sys_hash != sys_hash {
                return Err(DatasetError::Invalid(format!("transition {i}: sys_hash differs from the first row")));
            }
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, out: W) -> Result<(), DatasetError> {
        self.write_jsonl_tagged(out, None)
    }

    /// As [`Dataset::write_jsonl`], recording `config_hash` in the header.
    pub fn write_jsonl_tagged<W: Write>(&self, mut out: W, config_hash: Option<&str>) -> Result<(), DatasetError> {
        self.validate()?;
        let header = Header {
            schema_version: self.schema_version,
            dataset: self.name,
            count: self.len(),
            config_hash: config_hash.map(str::to_string),
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for t in &self.transitions {
            writeln!(out, "{}", serde_json::to_string(t)?)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, DatasetError> {
        let mut lines = input.lines().enumerate();
        let (_, first) = lines.next().ok_or(DatasetError::Parse { line: 1, message: "missing header".into() })?;
        let header: Header =
            serde_json::from_str(&first?).map_err(|e| DatasetError::Parse { line: 1, message: e.to_string() })?;
        if header.schema_version != DATASET_SCHEMA_VERSION {
            return Err(DatasetError::Parse {
                line: 1,
                message: format!("unsupported schema_version {}", header.schema_version),
            });
        }
        let mut transitions = Vec::with_capacity(header.count);
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: Transition =
                serde_json::from_str(&line).map_err(|e| DatasetError::Parse { line: idx + 1, message: e.to_string() })?;
            check_transition(&t).map_err(|message| DatasetError::Parse { line: idx + 1, message })?;
            transitions.push(t);
        }
        if transitions.len() != header.count {
            return Err(DatasetError::Invalid(format!(
                "header promises {} transitions, file has {}",
                header.count,
                transitions.len()
            )));
        }
        let ds = Dataset { name: header.dataset, transitions, schema_version: header.schema_version };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        self.save_tagged(path, None)
    }

    pub fn save_tagged(&self, path: &Path, config_hash: Option<&str>) -> Result<(), DatasetError> {
        let mut buf = Vec::new();
        self.write_jsonl_tagged(&mut buf, config_hash)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        Self::read_jsonl(BufReader::new(fs::File::open(path)?))
    }

    /// Seeded disjoint partition into `(train, holdout)`; `train_fraction`
    /// of the rows (rounded) go to the first part. Each part keeps file
    /// order.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DatasetError> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(DatasetError::Invalid(format!("train fraction {train_fraction} outside [0, 1]")));
        }
        let n = self.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let k = (train_fraction * n as f64).round() as usize;
        let (mut a, mut b) = (idx[..k].to_vec(), idx[k..].to_vec());
        a.sort_unstable();
        b.sort_unstable();
        let pick = |ids: &[usize]| Dataset {
            name: self.name,
            transitions: ids.iter().map(|&i| self.transitions[i].clone()).collect(),
            schema_version: self.schema_version,
        };
        Ok((pick(&a), pick(&b)))
    }
}

fn check_transition(t: &Transition) -> Result<(), String> {
    let xy = polar_to_cartesian(t.endpoint);
    if (xy.x - t.endpoint_xy.x).abs() > 1e-9 || (xy.y - t.endpoint_xy.y).abs() > 1e-9 {
        return Err(format!("endpoint_xy {:?} does not match endpoint {:?}", t.endpoint_xy, t.endpoint));
    }
    if !t.action.is_finite() {
        return Err("non-finite action".into());
    }
    Ok(())
}
