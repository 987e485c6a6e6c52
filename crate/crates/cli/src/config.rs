//! Experiment configuration: one JSON file holding every constant a run
//! depends on.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dyncable::analysis::Alpha;
use dyncable::cablesim::{CableParams, NoiseSpec, ParamId, ParamMask, SimConfig};
use dyncable::models::{GpConfig, TrainConfig};
use dyncable::policy::{PolarCastConfig, DEFAULT_TARGET_ANGLES, DEFAULT_TARGET_RADII};
use dyncable::provenance::hash_json;
use dyncable::trajgen::{ActionBounds, ActionSet, SystemParams, WorkspaceLimits};
use dyncable::tuner::{DEConfig, ParamBounds};

use crate::error::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRange {
    pub param: ParamId,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub train_references: usize,
    pub holdout_references: usize,
    /// Searched parameters and their ranges; all others come from `sim_params`.
    pub search: Vec<SearchRange>,
    pub de: DEConfig,
}

impl Default for TuneSection {
    fn default() -> Self {
        Self {
            train_references: 60,
            holdout_references: 20,
            search: vec![
                SearchRange { param: ParamId::BendStiffness, lo: 0.01, hi: 0.06 },
                SearchRange { param: ParamId::LateralFriction, lo: 0.03, hi: 0.3 },
                SearchRange { param: ParamId::EndpointMassScale, lo: 1.0, hi: 8.0 },
            ],
            de: DEConfig { population_size: Some(15), max_generations: 30, ..DEConfig::default() },
        }
    }
}

impl TuneSection {
    pub fn mask(&self) -> ParamMask {
        ParamMask::only(&self.search.iter().map(|s| s.param).collect::<Vec<_>>())
    }

    /// Bounds with the searched ranges filled in around `base`.
    pub fn bounds(&self, base: &CableParams) -> ParamBounds {
        let mut b = ParamBounds::around(base, 0.0);
        for s in &self.search {
            b.set(s.param, s.lo, s.hi);
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub sim_transitions: usize,
    pub real_transitions: usize,
    /// Share of the real stand-in held out from fine-tuning.
    pub real_holdout_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { sim_transitions: 2000, real_transitions: 200, real_holdout_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum World {
    /// Tuned simulator, no noise.
    Sim,
    /// The physical stand-in: reference cable with noise.
    Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub pool_size: usize,
    pub trials_per_target: usize,
    pub target_radii: Vec<f64>,
    pub target_angles: Vec<f64>,
    pub world: World,
    pub cast: PolarCastConfig,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            pool_size: 5000,
            trials_per_target: 5,
            target_radii: DEFAULT_TARGET_RADII.to_vec(),
            target_angles: DEFAULT_TARGET_ANGLES.to_vec(),
            world: World::Real,
            cast: PolarCastConfig::default(),
        }
    }
}

/// One endpoint set for the coverage study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRun {
    pub label: String,
    pub action_set: ActionSet,
    pub counts: Vec<usize>,
    pub r0: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageSection {
    pub runs: Vec<CoverageRun>,
    pub alpha: Alpha,
}

fn coverage_runs(a1: &[usize], a2: &[usize]) -> Vec<CoverageRun> {
    let run = |label: &str, set, counts: &[usize], v_max| CoverageRun {
        label: label.into(),
        action_set: set,
        counts: counts.to_vec(),
        r0: 0.6,
        v_max,
    };
    vec![
        run("a1_v1.2", ActionSet::A1, a1, 1.2),
        run("a1_v1.5", ActionSet::A1, a1, 1.5),
        run("a1_v1.8", ActionSet::A1, a1, 1.8),
        run("a2_v1.5", ActionSet::A2, a2, 1.5),
    ]
}

impl Default for CoverageSection {
    fn default() -> Self {
        Self { runs: coverage_runs(&[10, 10, 10], &[7, 7, 7, 4]), alpha: Alpha::Auto }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepeatSection {
    pub actions: usize,
    pub trials: usize,
    /// Multiples of `noise` to run.
    pub noise_levels: Vec<f64>,
}

impl Default for RepeatSection {
    fn default() -> Self {
        Self { actions: 20, trials: 5, noise_levels: vec![0.0, 1.0, 2.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub references: u64,
    pub data: u64,
    pub eval: u64,
    pub repeat: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { references: 11, data: 1, eval: 3, repeat: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Where every artifact goes. Not part of the config hash.
    pub output_dir: PathBuf,
    pub sys: SystemParams,
    pub sim: SimConfig,
    pub limits: WorkspaceLimits,
    pub bounds: ActionBounds,
    /// Action set the policy learns and selects from.
    pub action_set: ActionSet,
    /// The cable standing in for the physical one.
    pub real_params: CableParams,
    /// Simulator parameters before tuning.
    pub sim_params: CableParams,
    /// Perturbation of the physical stand-in.
    pub noise: NoiseSpec,
    pub tune: TuneSection,
    pub data: DataSection,
    pub train: TrainConfig,
    pub gp: GpConfig,
    pub eval: EvalSection,
    pub coverage: CoverageSection,
    pub repeat: RepeatSection,
    pub seeds: Seeds,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let real = CableParams::reference_cable();
        let untuned = CableParams::default();
        let mut sim_params = real.clone();
        for id in [ParamId::BendStiffness, ParamId::LateralFriction, ParamId::EndpointMassScale] {
            sim_params.set(id, untuned.get(id));
        }
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            output_dir: PathBuf::from("runs/default"),
            sys: SystemParams::default(),
            sim: SimConfig::default(),
            limits: WorkspaceLimits::default(),
            bounds: ActionBounds::default(),
            action_set: ActionSet::A2,
            real_params: real,
            sim_params,
            noise: NoiseSpec::new(0.005, 0.01),
            tune: TuneSection::default(),
            data: DataSection::default(),
            train: TrainConfig::default(),
            gp: GpConfig::default(),
            eval: EvalSection::default(),
            coverage: CoverageSection::default(),
            repeat: RepeatSection::default(),
            seeds: Seeds::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| invalid(format!("config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Paper-scale counts: 36,000 simulated transitions, a 50,000-action
    /// pool and the 15³ / 10×10×10×5 coverage grids.
    pub fn full_scale(&mut self) {
        self.data.sim_transitions = 36_000;
        self.eval.pool_size = 50_000;
        self.coverage.runs = coverage_runs(&[15, 15, 15], &[10, 10, 10, 5]);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.sys.validate().map_err(|e| invalid(e.to_string()))?;
        self.sim.validate().map_err(|e| invalid(e.to_string()))?;
        self.real_params.validate().map_err(|e| invalid(format!("real_params: {e}")))?;
        self.sim_params.validate().map_err(|e| invalid(format!("sim_params: {e}")))?;
        self.train.validate().map_err(|e| invalid(e.to_string()))?;
        if !(self.limits.r_max > 0.0 && self.limits.r_c > 0.0) {
            return Err(invalid("limits.r_max and limits.r_c must be positive"));
        }
        if (self.limits.r_c - self.sim.rest_length_total).abs() > 1e-9 {
            return Err(invalid(format!(
                "limits.r_c ({}) must equal sim.rest_length_total ({})",
                self.limits.r_c, self.sim.rest_length_total
            )));
        }
        if self.tune.search.is_empty() {
            return Err(invalid("tune.search is empty"));
        }
        for s in &self.tune.search {
            if !(s.lo < s.hi) {
                return Err(invalid(format!("tune.search {}: empty range [{}, {}]", s.param.name(), s.lo, s.hi)));
            }
        }
        self.tune.de.validate(self.tune.search.len()).map_err(|e| invalid(e.to_string()))?;
        let positive = [
            ("tune.train_references", self.tune.train_references),
            ("tune.holdout_references", self.tune.holdout_references),
            ("data.sim_transitions", self.data.sim_transitions),
            ("data.real_transitions", self.data.real_transitions),
            ("eval.pool_size", self.eval.pool_size),
            ("eval.trials_per_target", self.eval.trials_per_target),
            ("repeat.actions", self.repeat.actions),
            ("repeat.trials", self.repeat.trials),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.data.real_holdout_fraction) {
            return Err(invalid("data.real_holdout_fraction must be in [0, 1)"));
        }
        if self.eval.target_radii.is_empty() || self.eval.target_angles.is_empty() {
            return Err(invalid("eval targets are empty"));
        }
        if !(self.noise.sigma_pos >= 0.0 && self.noise.sigma_act >= 0.0) {
            return Err(invalid("noise sigmas must be ≥ 0"));
        }
        if self.repeat.noise_levels.iter().any(|k| !(*k >= 0.0)) {
            return Err(invalid("repeat.noise_levels must be ≥ 0"));
        }
        for run in &self.coverage.runs {
            if run.counts.len() != run.action_set.dim() {
                return Err(invalid(format!("coverage run {}: {:?} needs {} counts", run.label, run.action_set, run.action_set.dim())));
            }
        }
        if let Alpha::Radius(r) = self.coverage.alpha {
            if !(r > 0.0) {
                return Err(invalid("coverage.alpha radius must be positive"));
            }
        }
        Ok(())
    }

    /// Short hash of everything that shapes results (the output directory
    /// is left out).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        hash_json(&c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { output_dir: "elsewhere".into(), ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.seeds.eval += 1;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"data": {"sim_transitions": 50}}"#).unwrap();
        assert_eq!(cfg.data.sim_transitions, 50);
        assert_eq!(cfg.data.real_transitions, DataSection::default().real_transitions);
    }

    #[test]
    fn invalid_fields_are_config_errors() {
        let mut cfg = ExperimentConfig::default();
        cfg.limits.r_c += 0.1;
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let mut cfg = ExperimentConfig::default();
        cfg.coverage.runs[0].counts.pop();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.tune.search[0].hi = cfg.tune.search[0].lo;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.data.real_holdout_fraction = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn tuning_bounds_follow_the_search_ranges() {
        let cfg = ExperimentConfig::default();
        let b = cfg.tune.bounds(&cfg.sim_params);
        let mask = cfg.tune.mask();
        assert_eq!(mask.count(), cfg.tune.search.len());
        assert!(b.contains(&cfg.real_params, &mask));
        let base = cfg.sim_params.to_array();
        for id in ParamId::ALL.into_iter().filter(|id| !mask.contains(*id)) {
            assert_eq!((b.lo[id.index()], b.hi[id.index()]), (base[id.index()], base[id.index()]));
        }
    }
}
