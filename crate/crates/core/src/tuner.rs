//! Differential Evolution over the cable parameters.
//!
//! The objective rolls every reference action out from the reset state and
//! averages the waypoint distance between simulated and reference endpoint
//! traces. The search is best1bin with Latin-hypercube initialisation, a
//! dithered differential weight and greedy selection.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cablesim::{reset_state, rollout, CableParams, ParamId, ParamMask, SimConfig, SimError, TrajectoryTrace};
use crate::stats::median;
use crate::trajgen::{plan, Action, SystemParams, TrajError};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("invalid tuning problem: {0}")]
    InvalidProblem(String),
    #[error("invalid DE config: {0}")]
    InvalidConfig(String),
    #[error("every initial candidate blew up; widen or move the parameter bounds")]
    AllPenalized,
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Traj(#[from] TrajError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// An executed action and the endpoint trace it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub action: Action,
    pub trace: TrajectoryTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub lo: [f64; 10],
    pub hi: [f64; 10],
}

impl ParamBounds {
    /// `center · (1 ± frac)` for every parameter.
    pub fn around(center: &CableParams, frac: f64) -> Self {
        let c = center.to_array();
        Self { lo: c.map(|v| v * (1.0 - frac)), hi: c.map(|v| v * (1.0 + frac)) }
    }

    pub fn set(&mut self, id: ParamId, lo: f64, hi: f64) {
        self.lo[id.index()] = lo;
        self.hi[id.index()] = hi;
    }

    pub fn contains(&self, params: &CableParams, mask: &ParamMask) -> bool {
        let a = params.to_array();
        mask.ids().iter().all(|id| a[id.index()] >= self.lo[id.index()] && a[id.index()] <= self.hi[id.index()])
    }
}

#[derive(Debug, Clone)]
pub struct TuneProblem {
    pub references: Vec<Reference>,
    pub bounds: ParamBounds,
    pub mask: ParamMask,
    /// Values used for every parameter outside the mask.
    pub base: CableParams,
    pub sim_cfg: SimConfig,
    pub sys: SystemParams,
}

impl TuneProblem {
    pub fn validate(&self) -> Result<(), TuneError> {
        if self.references.is_empty() {
            return Err(TuneError::InvalidProblem("no reference trajectories".into()));
        }
        if self.mask.count() == 0 {
            return Err(TuneError::InvalidProblem("no parameters selected".into()));
        }
        for id in self.mask.ids() {
            let (lo, hi) = (self.bounds.lo[id.index()], self.bounds.hi[id.index()]);
            if !(lo < hi) {
                return Err(TuneError::InvalidProblem(format!("{}: bounds [{lo}, {hi}] are empty", id.name())));
            }
        }
        Ok(())
    }

    /// Blow-up penalty, meters.
    pub fn penalty(&self) -> f64 {
        10.0 * self.sim_cfg.rest_length_total
    }

    /// Parameters with the masked entries replaced by `x`.
    pub fn params_from(&self, x: &[f64]) -> CableParams {
        let mut p = self.base.clone();
        for (id, v) in self.mask.ids().into_iter().zip(x) {
            p.set(id, *v);
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DEConfig {
    /// `None` means ten per searched parameter.
    pub population_size: Option<usize>,
    pub crossover_prob: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub max_generations: usize,
    pub convergence_rel_std: f64,
    pub seed: u64,
}

impl Default for DEConfig {
    fn default() -> Self {
        Self {
            population_size: None,
            crossover_prob: 0.7,
            f_min: 0.5,
            f_max: 1.0,
            max_generations: 60,
            convergence_rel_std: 0.01,
            seed: 0,
        }
    }
}

impl DEConfig {
    pub fn population_for(&self, dims: usize) -> usize {
        self.population_size.unwrap_or(10 * dims)
    }

    pub fn validate(&self, dims: usize) -> Result<(), TuneError> {
        let np = self.population_for(dims);
        if np < 4 {
            return Err(TuneError::InvalidConfig(format!("population_size {np} < 4")));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return Err(TuneError::InvalidConfig(format!("crossover_prob {} outside [0, 1]", self.crossover_prob)));
        }
        if !(self.f_min > 0.0 && self.f_min <= self.f_max) {
            return Err(TuneError::InvalidConfig(format!("need 0 < f_min ≤ f_max, got {}..{}", self.f_min, self.f_max)));
        }
        Ok(())
    }
}

/// Mean over waypoints of the distance between a reference trace and a
/// simulated one, padding the simulated trace with its last sample.
pub fn trace_discrepancy(reference: &TrajectoryTrace, simulated: &TrajectoryTrace) -> f64 {
    if reference.is_empty() {
        return match (reference.final_point(), simulated.final_point()) {
            (Some(a), Some(b)) => a.distance(&b),
            _ => 0.0,
        };
    }
    let Some(_) = simulated.final_point() else {
        return f64::INFINITY;
    };
    let total: f64 = reference
        .waypoints
        .iter()
        .enumerate()
        .map(|(i, p)| p.distance(&simulated.padded(i).unwrap()))
        .sum();
    total / reference.len() as f64
}

/// Simulated trace of one action from the reset state.
pub fn simulate_trace(
    action: &Action,
    params: &CableParams,
    cfg: &SimConfig,
    sys: &SystemParams,
) -> Result<TrajectoryTrace, TuneError> {
    let state = reset_state(cfg, sys)?;
    let traj = plan(action, sys)?;
    Ok(rollout(&state, &traj, params, cfg, sys.control_period)?.trace)
}

/// Objective value and whether any rollout blew up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub penalized: bool,
}

fn evaluate(params: &CableParams, problem: &TuneProblem) -> Evaluation {
    let mut sum = 0.0;
    for r in &problem.references {
        match simulate_trace(&r.action, params, &problem.sim_cfg, &problem.sys) {
            Ok(trace) => sum += trace_discrepancy(&r.trace, &trace),
            Err(e) => {
                log::warn!("rollout failed during tuning, penalising candidate: {e}");
                return Evaluation { value: problem.penalty(), penalized: true };
            }
        }
    }
    Evaluation { value: sum / problem.references.len() as f64, penalized: false }
}

/// ε_trajs in meters.
pub fn objective(params: &CableParams, problem: &TuneProblem) -> f64 {
    evaluate(params, problem).value
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: CableParams,
    pub best_objective: f64,
    /// Generation 0 is the initial population.
    pub history: Vec<GenerationStats>,
    pub converged: bool,
    pub evaluations: usize,
    pub penalized: usize,
}

fn latin_hypercube(rng: &mut ChaCha8Rng, np: usize, lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    let mut pop = vec![vec![0.0; lo.len()]; np];
    for d in 0..lo.len() {
        let mut strata: Vec<usize> = (0..np).collect();
        strata.shuffle(rng);
        for (k, member) in pop.iter_mut().enumerate() {
            let u: f64 = rng.random();
            member[d] = lo[d] + (strata[k] as f64 + u) / np as f64 * (hi[d] - lo[d]);
        }
    }
    pop
}

fn stats(generation: usize, energies: &[f64]) -> GenerationStats {
    let best = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = energies.iter().sum::<f64>() / energies.len() as f64;
    GenerationStats { generation, best, mean }
}

fn converged(energies: &[f64], rel: f64) -> bool {
    let n = energies.len() as f64;
    let mean = energies.iter().sum::<f64>() / n;
    let std = (energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
    std <= rel * mean.abs()
}

fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x < xs[best] {
            best = i;
        }
    }
    best
}

fn evaluate_all(problem: &TuneProblem, candidates: &[Vec<f64>]) -> Vec<Evaluation> {
    candidates.par_iter().map(|x| evaluate(&problem.params_from(x), problem)).collect()
}

/// best1bin Differential Evolution. Random draws for a whole generation
/// are made before any candidate is evaluated, so results do not depend on
/// how many worker threads run the evaluations.
pub fn tune(problem: &TuneProblem, de: &DEConfig) -> Result<TuneResult, TuneError> {
    problem.validate()?;
    let ids = problem.mask.ids();
    let dims = ids.len();
    de.validate(dims)?;
    let np = de.population_for(dims);
    let lo: Vec<f64> = ids.iter().map(|id| problem.bounds.lo[id.index()]).collect();
    let hi: Vec<f64> = ids.iter().map(|id| problem.bounds.hi[id.index()]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(de.seed);

    let mut pop = latin_hypercube(&mut rng, np, &lo, &hi);
    let evals = evaluate_all(problem, &pop);
    let mut penalized = evals.iter().filter(|e| e.penalized).count();
    if penalized == np {
        return Err(TuneError::AllPenalized);
    }
    let mut energies: Vec<f64> = evals.iter().map(|e| e.value).collect();
    let mut evaluations = np;
    let mut history = vec![stats(0, &energies)];
    let mut done = converged(&energies, de.convergence_rel_std);

    for generation in 1..=de.max_generations {
        if done {
            break;
        }
        let best = pop[argmin(&energies)].clone();
        let f = rng.random_range(de.f_min..=de.f_max);
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let r1 = loop {
                    let r = rng.random_range(0..np);
                    if r != i {
                        break r;
                    }
                };
                let r2 = loop {
                    let r = rng.random_range(0..np);
                    if r != i && r != r1 {
                        break r;
                    }
                };
                let forced = rng.random_range(0..dims);
                (0..dims)
                    .map(|d| {
                        let cross: f64 = rng.random();
                        if d == forced || cross < de.crossover_prob {
                            (best[d] + f * (pop[r1][d] - pop[r2][d])).clamp(lo[d], hi[d])
                        } else {
                            pop[i][d]
                        }
                    })
                    .collect()
            })
            .collect();
        let results = evaluate_all(problem, &trials);
        evaluations += np;
        for (i, (trial, e)) in trials.into_iter().zip(results).enumerate() {
            penalized += e.penalized as usize;
            if e.value <= energies[i] {
                pop[i] = trial;
                energies[i] = e.value;
            }
        }
        history.push(stats(generation, &energies));
        log::info!("generation {generation}: best {:.6} mean {:.6}", history[generation].best, history[generation].mean);
        done = converged(&energies, de.convergence_rel_std);
    }

    let b = argmin(&energies);
    Ok(TuneResult {
        best: problem.params_from(&pop[b]),
        best_objective: energies[b],
        history,
        converged: done,
        evaluations,
        penalized,
    })
}

/// Uniform random search with the given number of objective evaluations.
/// Used as a yardstick for the DE result.
pub fn random_search(problem: &TuneProblem, budget: usize, seed: u64) -> Result<(CableParams, f64), TuneError> {
    problem.validate()?;
    let ids = problem.mask.ids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<Vec<f64>> = (0..budget.max(1))
        .map(|_| ids.iter().map(|id| rng.random_range(problem.bounds.lo[id.index()]..=problem.bounds.hi[id.index()])).collect())
        .collect();
    let values: Vec<f64> = evaluate_all(problem, &candidates).iter().map(|e| e.value).collect();
    let b = argmin(&values);
    Ok((problem.params_from(&candidates[b]), values[b]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub count: usize,
    pub median_final_l2: f64,
    pub eps_trajs: f64,
    pub median_final_l2_pct: f64,
    pub eps_trajs_pct: f64,
}

/// Median final-endpoint distance and ε_trajs on held-out references.
pub fn validate(
    params: &CableParams,
    holdout: &[Reference],
    cfg: &SimConfig,
    sys: &SystemParams,
) -> Result<ValidationReport, TuneError> {
    if holdout.is_empty() {
        return Err(TuneError::InvalidProblem("empty holdout".into()));
    }
    let sims: Vec<Result<TrajectoryTrace, TuneError>> =
        holdout.par_iter().map(|r| simulate_trace(&r.action, params, cfg, sys)).collect();
    let mut finals = Vec::with_capacity(holdout.len());
    let mut eps = 0.0;
    for (r, sim) in holdout.iter().zip(sims) {
        let sim = sim?;
        eps += trace_discrepancy(&r.trace, &sim);
        let a = r.trace.final_point();
        let b = sim.final_point();
        finals.push(match (a, b) {
            (Some(a), Some(b)) => a.distance(&b),
            _ => 0.0,
        });
    }
    let eps = eps / holdout.len() as f64;
    let med = median(&finals);
    let pct = 100.0 / cfg.rest_length_total;
    Ok(ValidationReport {
        count: holdout.len(),
        median_final_l2: med,
        eps_trajs: eps,
        median_final_l2_pct: med * pct,
        eps_trajs_pct: eps * pct,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub action: String,
    pub trace: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub references: Vec<ManifestEntry>,
}

#[derive(Serialize)]
struct ActionFile<'a> {
    #[serde(flatten)]
    action: &'a Action,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_hash: Option<&'a str>,
}

/// Writes `action_NNN.json` / `trace_NNN.csv` pairs and a manifest into
/// `dir`. Returns the manifest path. `config_hash`, when given, is stored in
/// every file written.
pub fn write_references(dir: &Path, name: &str, refs: &[Reference], config_hash: Option<&str>) -> Result<PathBuf, TuneError> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(refs.len());
    for (i, r) in refs.iter().enumerate() {
        let action = format!("{name}_action_{i:03}.json");
        let trace = format!("{name}_trace_{i:03}.csv");
        let file = ActionFile { action: &r.action, config_hash };
        fs::write(dir.join(&action), serde_json::to_string_pretty(&file)? + "\n")?;
        let mut buf = Vec::new();
        let comments: Vec<String> = config_hash.map(|h| format!("config_hash: {h}")).into_iter().collect();
        r.trace.write_csv(&mut buf, &comments)?;
        fs::write(dir.join(&trace), buf)?;
        entries.push(ManifestEntry { action, trace });
    }
    let manifest = Manifest { schema_version: MANIFEST_SCHEMA_VERSION, config_hash: config_hash.map(str::to_string), references: entries };
    let path = dir.join(format!("{name}_manifest.json"));
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(path)
}

/// Loads the (action, trace) pairs listed in a manifest. Paths are relative
/// to the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Vec<Reference>, TuneError> {
    let err = |message: String| TuneError::Manifest { path: path.to_path_buf(), message };
    let text = fs::read_to_string(path)?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(err(format!("unsupported schema_version {}", manifest.schema_version)));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    manifest
        .references
        .iter()
        .map(|e| {
            let action: Action = serde_json::from_str(&fs::read_to_string(dir.join(&e.action))?)
                .map_err(|x| err(format!("{}: {x}", e.action)))?;
            let trace = TrajectoryTrace::read_csv(fs::File::open(dir.join(&e.trace))?)
                .map_err(|x| err(format!("{}: {x}", e.trace)))?;
            Ok(Reference { action, trace })
        })
        .collect()
}
