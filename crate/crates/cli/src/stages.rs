//! One function per pipeline stage. Each reads the config and upstream
//! artifacts from the output directory and writes its own.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dyncable::analysis::{
    auto_alpha, confidence_ellipse, coverage, render_coverage, render_ellipses, repeatability, Alpha,
    ConfidenceEllipse, EllipseGroup, RepeatStats,
};
use dyncable::cablesim::{endpoint_polar, reset_state, rollout, CableParams, NoiseSpec, TrajectoryTrace};
use dyncable::datasets::{Dataset, DatasetKind, Generator};
use dyncable::geometry::{PlanePoint, PolarPoint};
use dyncable::models::{ForwardModel, GpForward, MlpForward, SavedModel, TrainingSet};
use dyncable::policy::{target_grid, CandidatePool, EvalReport, EvalSummary, Evaluator, PolicyKind};
use dyncable::provenance::derive_seed;
use dyncable::stats::median;
use dyncable::trajgen::{
    grid_of_size, grid_sample_actions, random_actions, synthesize, Action, ActionGrid, ActionSet, SystemParams,
};
use dyncable::tuner::{
    load_manifest, objective, simulate_trace, tune, validate, write_references, GenerationStats, Reference,
    TuneProblem, ValidationReport,
};

use crate::config::{ExperimentConfig, World};
use crate::error::CliError;

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

pub const TRAIN_MANIFEST: &str = "refs/train_manifest.json";
pub const HOLDOUT_MANIFEST: &str = "refs/holdout_manifest.json";
pub const TUNED_PARAMS: &str = "tune/tuned_params.json";
pub const SIM_DATA: &str = "data/sim.jsonl";
pub const REAL_DATA: &str = "data/real.jsonl";
pub const TUNE_DATA: &str = "data/tune.jsonl";
pub const MODEL_NAMES: [&str; 3] = ["mlp", "mlp_sim", "gp"];

/// A validated config, its hash and the output directory.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: ExperimentConfig,
    pub hash: String,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    schema_version: u32,
    config_hash: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

impl Context {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, CliError> {
        cfg.validate()?;
        let hash = cfg.hash();
        let out = cfg.output_dir.clone();
        Ok(Self { cfg, hash, out })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    /// Path of an upstream artifact, or the error naming the stage that
    /// makes it.
    pub fn require(&self, rel: &str, stage: &'static str) -> Result<PathBuf, CliError> {
        let p = self.path(rel);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::MissingArtifact { path: p, stage })
        }
    }

    fn create(&self, rel: &str) -> Result<PathBuf, CliError> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir)?;
        }
        Ok(p)
    }

    fn write_json<T: Serialize>(&self, rel: &str, body: &T) -> Result<PathBuf, CliError> {
        let p = self.create(rel)?;
        let tagged = Tagged { schema_version: ARTIFACT_SCHEMA_VERSION, config_hash: &self.hash, body };
        fs::write(&p, serde_json::to_string_pretty(&tagged)? + "\n")?;
        Ok(p)
    }

    /// CSV rows after a `# config_hash: …` comment line.
    fn write_csv<T: Serialize>(&self, rel: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        let p = self.create(rel)?;
        let mut buf = format!("# config_hash: {}\n", self.hash).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        fs::write(&p, buf)?;
        Ok(p)
    }

    fn write_svg(&self, rel: &str, svg: &str) -> Result<PathBuf, CliError> {
        let p = self.create(rel)?;
        // the hash goes after the root element's opening tag
        let tagged = match svg.find('>') {
            Some(i) => format!("{}\n<!-- config_hash: {} -->{}", &svg[..=i], self.hash, &svg[i + 1..]),
            None => svg.to_string(),
        };
        fs::write(&p, tagged)?;
        Ok(p)
    }

    /// Appends a timestamped line to the `run.log` sidecar.
    pub fn log(&self, line: &str) -> Result<(), CliError> {
        fs::create_dir_all(&self.out)?;
        let t = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let mut f = fs::OpenOptions::new().create(true).append(true).open(self.path("run.log"))?;
        writeln!(f, "{t:.3} [{}] {line}", self.hash)?;
        Ok(())
    }

    /// Runs `body` between start and finish entries in the log.
    pub fn stage<T>(&self, name: &str, body: impl FnOnce(&Self) -> Result<T, CliError>) -> Result<T, CliError> {
        self.log(&format!("{name} started"))?;
        let t = Instant::now();
        let r = body(self);
        match &r {
            Ok(_) => self.log(&format!("{name} finished in {:.2} s", t.elapsed().as_secs_f64()))?,
            Err(e) => self.log(&format!("{name} failed after {:.2} s: {e}", t.elapsed().as_secs_f64()))?,
        }
        r
    }

    fn real_generator(&self, noise: Option<NoiseSpec>) -> Generator<'_> {
        Generator { params: &self.cfg.real_params, cfg: &self.cfg.sim, sys: &self.cfg.sys, noise }
    }

    fn real_noise(&self) -> Option<NoiseSpec> {
        (!self.cfg.noise.is_zero()).then_some(self.cfg.noise)
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Reference actions split evenly between the two action sets.
fn reference_actions(ctx: &Context, count: usize, seed: u64) -> Result<Vec<Action>, CliError> {
    let c = &ctx.cfg;
    let n1 = count / 2;
    let mut actions = random_actions(ActionSet::A1, &c.bounds, n1, &c.sys, &c.limits, derive_seed(seed, 0))?;
    actions.extend(random_actions(ActionSet::A2, &c.bounds, count - n1, &c.sys, &c.limits, derive_seed(seed, 1))?);
    Ok(actions)
}

fn references(ctx: &Context, actions: &[Action]) -> Result<Vec<Reference>, CliError> {
    let c = &ctx.cfg;
    let traces: Result<Vec<TrajectoryTrace>, _> =
        actions.par_iter().map(|a| simulate_trace(a, &c.real_params, &c.sim, &c.sys)).collect();
    Ok(actions.iter().cloned().zip(traces?).map(|(action, trace)| Reference { action, trace }).collect())
}

/// Reference trajectories for tuning, recorded on the physical stand-in
/// (without perturbation), plus their endpoints as D_tune.
pub fn gen_tune_data(ctx: &Context) -> Result<String, CliError> {
    let c = &ctx.cfg;
    let train = reference_actions(ctx, c.tune.train_references, derive_seed(c.seeds.references, 0))?;
    let holdout = reference_actions(ctx, c.tune.holdout_references, derive_seed(c.seeds.references, 1))?;
    let dir = ctx.path("refs");
    write_references(&dir, "train", &references(ctx, &train)?, Some(&ctx.hash))?;
    write_references(&dir, "holdout", &references(ctx, &holdout)?, Some(&ctx.hash))?;
    let all: Vec<Action> = train.iter().chain(&holdout).cloned().collect();
    let d = ctx.real_generator(None).generate(DatasetKind::Tune, &all, c.seeds.data)?;
    d.save_tagged(&ctx.create(TUNE_DATA)?, Some(&ctx.hash))?;
    Ok(format!("wrote {} train and {} holdout reference trajectories", train.len(), holdout.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSummary {
    pub params: CableParams,
    pub best_objective: f64,
    /// Training objective of the untuned simulator parameters.
    pub start_objective: f64,
    /// Training objective of the library-default parameters.
    pub default_objective: f64,
    pub converged: bool,
    pub generations: usize,
    pub evaluations: usize,
    pub penalized: usize,
    pub holdout: ValidationReport,
    pub holdout_start: ValidationReport,
    pub holdout_default: ValidationReport,
}

#[derive(Serialize)]
struct HistoryRow {
    generation: usize,
    best: f64,
    mean: f64,
}

pub fn run_tune(ctx: &Context, manifest: Option<&Path>) -> Result<TuneSummary, CliError> {
    let c = &ctx.cfg;
    let train_path = match manifest {
        Some(p) if p.is_file() => p.to_path_buf(),
        Some(p) => return Err(CliError::MissingArtifact { path: p.to_path_buf(), stage: "gen-data --kind tune" }),
        None => ctx.require(TRAIN_MANIFEST, "gen-data --kind tune")?,
    };
    let holdout_path = ctx.require(HOLDOUT_MANIFEST, "gen-data --kind tune")?;
    let problem = TuneProblem {
        references: load_manifest(&train_path)?,
        bounds: c.tune.bounds(&c.sim_params),
        mask: c.tune.mask(),
        base: c.sim_params.clone(),
        sim_cfg: c.sim.clone(),
        sys: c.sys.clone(),
    };
    let holdout = load_manifest(&holdout_path)?;
    let result = tune(&problem, &c.tune.de)?;
    let defaults = CableParams::default();
    let summary = TuneSummary {
        best_objective: result.best_objective,
        start_objective: objective(&c.sim_params, &problem),
        default_objective: objective(&defaults, &problem),
        converged: result.converged,
        generations: result.history.len().saturating_sub(1),
        evaluations: result.evaluations,
        penalized: result.penalized,
        holdout: validate(&result.best, &holdout, &c.sim, &c.sys)?,
        holdout_start: validate(&c.sim_params, &holdout, &c.sim, &c.sys)?,
        holdout_default: validate(&defaults, &holdout, &c.sim, &c.sys)?,
        params: result.best,
    };
    ctx.write_json(TUNED_PARAMS, &summary)?;
    let rows: Vec<HistoryRow> = result
        .history
        .iter()
        .map(|g: &GenerationStats| HistoryRow { generation: g.generation, best: g.best, mean: g.mean })
        .collect();
    ctx.write_csv("tune/history.csv", &rows)?;
    Ok(summary)
}

pub fn load_tuned(ctx: &Context) -> Result<CableParams, CliError> {
    let p = ctx.require(TUNED_PARAMS, "tune")?;
    Ok(read_json::<TuneSummary>(&p)?.params)
}

/// D_sim from the tuned simulator, grid-sampled.
pub fn gen_sim_data(ctx: &Context) -> Result<String, CliError> {
    let c = &ctx.cfg;
    let params = load_tuned(ctx)?;
    let actions = grid_of_size(c.action_set, &c.bounds, c.data.sim_transitions, &c.sys, &c.limits)?;
    let g = Generator { params: &params, cfg: &c.sim, sys: &c.sys, noise: None };
    let d = g.generate(DatasetKind::Sim, &actions, c.seeds.data)?;
    d.save_tagged(&ctx.create(SIM_DATA)?, Some(&ctx.hash))?;
    Ok(format!("D_sim: {} transitions, {} valid", d.len(), d.valid_count()))
}

/// The stand-in for physical data: reference cable with perturbation.
pub fn gen_real_data(ctx: &Context) -> Result<String, CliError> {
    let c = &ctx.cfg;
    let actions = grid_of_size(c.action_set, &c.bounds, c.data.real_transitions, &c.sys, &c.limits)?;
    let d = ctx.real_generator(ctx.real_noise()).generate(DatasetKind::Real, &actions, derive_seed(c.seeds.data, 1))?;
    d.save_tagged(&ctx.create(REAL_DATA)?, Some(&ctx.hash))?;
    Ok(format!("D_real stand-in: {} transitions, {} valid", d.len(), d.valid_count()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    Mlp,
    Gp,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub name: String,
    pub train_loss: Option<f64>,
    pub val_loss: Option<f64>,
    /// Median endpoint error on held-out stand-in rows, meters.
    pub real_holdout_median: Option<f64>,
}

fn median_error(model: &dyn ForwardModel, data: &TrainingSet) -> Result<Option<f64>, CliError> {
    if data.is_empty() {
        return Ok(None);
    }
    let preds = model.predict_many(&data.inputs)?;
    let errs: Vec<f64> =
        preds.iter().zip(&data.targets).map(|(p, y)| p.distance(&PlanePoint::new(y[0], y[1]))).collect();
    Ok(Some(median(&errs)))
}

pub fn run_train(ctx: &Context, choice: ModelChoice) -> Result<Vec<ModelReport>, CliError> {
    let c = &ctx.cfg;
    let sim = Dataset::load(&ctx.require(SIM_DATA, "gen-data --kind sim")?)?;
    let sim = TrainingSet::from_dataset(&sim);
    let real = match ctx.path(REAL_DATA) {
        p if p.is_file() => Some(Dataset::load(&p)?),
        _ => None,
    };
    let (real_train, real_test) = match &real {
        Some(d) => {
            let (a, b) = d.split(1.0 - c.data.real_holdout_fraction, derive_seed(c.seeds.data, 2))?;
            (TrainingSet::from_dataset(&a), TrainingSet::from_dataset(&b))
        }
        None => (TrainingSet::default(), TrainingSet::default()),
    };
    let mut reports = Vec::new();
    let mut save = |name: &str, model: SavedModel, train_loss, val_loss| -> Result<(), CliError> {
        let p = ctx.create(&format!("models/{name}.json"))?;
        model.save(&p, Some(&ctx.hash))?;
        reports.push(ModelReport {
            name: name.into(),
            train_loss,
            val_loss,
            real_holdout_median: median_error(model.as_forward(), &real_test)?,
        });
        Ok(())
    };
    if matches!(choice, ModelChoice::Mlp | ModelChoice::All) {
        let pre = MlpForward::train(&sim, &c.train)?;
        save("mlp_sim", SavedModel::Mlp(pre.clone()), Some(pre.train_loss), pre.val_loss)?;
        let tuned = if real_train.is_empty() {
            log::warn!("no {REAL_DATA}; mlp.json is the model trained on D_sim only");
            pre
        } else {
            pre.finetune(&real_train, &c.train)?
        };
        save("mlp", SavedModel::Mlp(tuned.clone()), Some(tuned.train_loss), tuned.val_loss)?;
    }
    if matches!(choice, ModelChoice::Gp | ModelChoice::All) {
        let gp = GpForward::train(&sim, &c.gp)?;
        save("gp", SavedModel::Gp(gp), None, None)?;
    }
    #[derive(Serialize)]
    struct Body<'a> {
        models: &'a [ModelReport],
    }
    ctx.write_json("models/train_summary.json", &Body { models: &reports })?;
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub policy: String,
    pub trials: usize,
    pub included: usize,
    pub off_table: usize,
    pub rejected_targets: usize,
    pub median_m: Option<f64>,
    pub q1_m: Option<f64>,
    pub q3_m: Option<f64>,
    pub min_m: Option<f64>,
    pub max_m: Option<f64>,
    pub median_pct: Option<f64>,
    pub q1_pct: Option<f64>,
    pub q3_pct: Option<f64>,
    pub min_pct: Option<f64>,
    pub max_pct: Option<f64>,
}

impl TableRow {
    fn new(policy: &str, s: &EvalSummary) -> Self {
        let (m, p) = (s.distance_m, s.distance_pct);
        Self {
            policy: policy.into(),
            trials: s.trials,
            included: s.included,
            off_table: s.off_table,
            rejected_targets: s.rejected_targets,
            median_m: m.map(|s| s.median),
            q1_m: m.map(|s| s.q1),
            q3_m: m.map(|s| s.q3),
            min_m: m.map(|s| s.min),
            max_m: m.map(|s| s.max),
            median_pct: p.map(|s| s.median),
            q1_pct: p.map(|s| s.q1),
            q3_pct: p.map(|s| s.q3),
            min_pct: p.map(|s| s.min),
            max_pct: p.map(|s| s.max),
        }
    }
}

fn evaluator(ctx: &Context) -> Result<Evaluator, CliError> {
    let c = &ctx.cfg;
    let (params, noise) = match c.eval.world {
        World::Real => (c.real_params.clone(), ctx.real_noise()),
        World::Sim => (load_tuned(ctx)?, None),
    };
    Ok(Evaluator {
        params,
        cfg: c.sim.clone(),
        sys: c.sys.clone(),
        ws: c.limits.clone(),
        noise,
        trials_per_target: c.eval.trials_per_target,
        seed: c.seeds.eval,
    })
}

/// Evaluates each named model (default: every trained one) and optionally
/// the polar-casting baseline on the target set.
pub fn run_eval(ctx: &Context, models: &[String], polar_cast: bool) -> Result<Vec<TableRow>, CliError> {
    let c = &ctx.cfg;
    let names: Vec<String> = if models.is_empty() {
        MODEL_NAMES.iter().filter(|n| ctx.path(&format!("models/{n}.json")).is_file()).map(|n| n.to_string()).collect()
    } else {
        models.to_vec()
    };
    if names.is_empty() && !polar_cast {
        return Err(CliError::MissingArtifact { path: ctx.path("models/mlp.json"), stage: "train" });
    }
    let targets = target_grid(&c.eval.target_radii, &c.eval.target_angles);
    let ev = evaluator(ctx)?;
    let mut rows = Vec::new();
    let mut run = |name: &str, report: EvalReport| -> Result<(), CliError> {
        report.save(&ctx.path("eval"), name, Some(&ctx.hash))?;
        rows.push(TableRow::new(name, &report.summary()));
        if name == "polar_cast" {
            rows.push(TableRow::new("polar_cast_reachable", &report.summarize_where(|t| !t.rejected)));
        }
        Ok(())
    };
    if !names.is_empty() {
        let actions = grid_of_size(c.action_set, &c.bounds, c.eval.pool_size, &c.sys, &c.limits)?;
        for name in &names {
            let path = ctx.require(&format!("models/{name}.json"), "train")?;
            let model = SavedModel::load(&path)?;
            let pool = CandidatePool::from_model(actions.clone(), model.as_forward())?;
            run(name, ev.evaluate(PolicyKind::Learned(&pool), &targets)?)?;
        }
    }
    if polar_cast {
        run("polar_cast", ev.evaluate(PolicyKind::PolarCast(&c.eval.cast), &targets)?)?;
    }
    ctx.write_csv("eval/table.csv", &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageEntry {
    pub label: String,
    pub action_set: ActionSet,
    pub r0: f64,
    pub v_max: f64,
    pub actions: usize,
    pub endpoints: usize,
    pub alpha: f64,
    pub area: f64,
    pub fraction: f64,
    /// Fraction at the radius shared by every run (automatic alpha only).
    pub fraction_common: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub common_alpha: Option<f64>,
    pub runs: Vec<CoverageEntry>,
}

pub fn run_coverage(ctx: &Context) -> Result<CoverageReport, CliError> {
    let c = &ctx.cfg;
    let params = load_tuned(ctx)?;
    let mut sets = Vec::new();
    for run in &c.coverage.runs {
        let sys = SystemParams { r0: run.r0, v_max: run.v_max, ..c.sys.clone() };
        let grid = ActionGrid { set: run.action_set, counts: run.counts.clone(), bounds: c.bounds.clone() };
        let actions = grid_sample_actions(&grid, &sys, &c.limits)?;
        if actions.is_empty() {
            return Err(CliError::Config(format!("coverage run {}: no action passes the limits", run.label)));
        }
        let g = Generator { params: &params, cfg: &c.sim, sys: &sys, noise: None };
        let d = g.generate(DatasetKind::Sim, &actions, c.seeds.data)?;
        let pts: Vec<PlanePoint> = d.valid().map(|t| t.endpoint_xy).collect();
        sets.push((run, actions.len(), pts));
    }
    let common = match c.coverage.alpha {
        Alpha::Auto => {
            let mut a = 0.0f64;
            for (_, _, pts) in &sets {
                a = a.max(auto_alpha(pts)?);
            }
            Some(a)
        }
        _ => None,
    };
    let mut runs = Vec::new();
    for (run, n_actions, pts) in &sets {
        let cov = coverage(pts, &c.limits, c.coverage.alpha)?;
        let fraction_common = match common {
            Some(a) => Some(coverage(pts, &c.limits, Alpha::Radius(a))?.fraction),
            None => None,
        };
        ctx.write_svg(&format!("coverage/{}.svg", run.label), &render_coverage(&cov, pts, &c.limits)?)?;
        runs.push(CoverageEntry {
            label: run.label.clone(),
            action_set: run.action_set,
            r0: run.r0,
            v_max: run.v_max,
            actions: *n_actions,
            endpoints: pts.len(),
            alpha: cov.alpha,
            area: cov.area,
            fraction: cov.fraction,
            fraction_common,
        });
    }
    let report = CoverageReport { common_alpha: common, runs };
    ctx.write_json("coverage/coverage.json", &report)?;
    ctx.write_csv("coverage/coverage.csv", &report.runs)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatLevel {
    pub level: f64,
    pub noise: NoiseSpec,
    pub stats: RepeatStats,
    pub ellipses: Vec<ConfidenceEllipse>,
}

#[derive(Serialize)]
struct RepeatRow {
    level: f64,
    action_index: usize,
    mean_x: f64,
    mean_y: f64,
    std_m: f64,
    std_pct: f64,
    trials: usize,
    off_table: usize,
}

/// Executes each action repeatedly on the physical stand-in at every
/// configured noise multiple. Trial `k` of action `i` draws the same seed
/// at every level.
pub fn run_repeat(ctx: &Context) -> Result<Vec<RepeatLevel>, CliError> {
    let c = &ctx.cfg;
    let actions = grid_of_size(c.action_set, &c.bounds, c.repeat.actions, &c.sys, &c.limits)?;
    let mut levels = Vec::new();
    let mut rows = Vec::new();
    for &k in &c.repeat.noise_levels {
        let noise = c.noise.scaled(k);
        let g = ctx.real_generator((!noise.is_zero()).then_some(noise));
        let trials: Result<Vec<Vec<PlanePoint>>, CliError> = actions
            .par_iter()
            .enumerate()
            .map(|(i, a)| {
                (0..c.repeat.trials)
                    .map(|t| {
                        let seed = derive_seed(derive_seed(c.seeds.repeat, i as u64), t as u64);
                        Ok(g.execute(a, seed)?.0)
                    })
                    .collect()
            })
            .collect();
        let trials = trials?;
        let stats = repeatability(&trials, &c.limits);
        let mut groups = Vec::new();
        for a in &stats.actions {
            let pts: Vec<PlanePoint> = trials[a.action_index].iter().copied().filter(|p| c.limits.on_table(*p)).collect();
            groups.push(EllipseGroup { ellipse: confidence_ellipse(&pts)?, points: pts });
            rows.push(RepeatRow {
                level: k,
                action_index: a.action_index,
                mean_x: a.mean.x,
                mean_y: a.mean.y,
                std_m: a.std,
                std_pct: a.std_pct,
                trials: a.trials,
                off_table: a.off_table,
            });
        }
        if !groups.is_empty() {
            ctx.write_svg(&format!("repeat/ellipses_{k}.svg"), &render_ellipses(&groups, &c.limits)?)?;
        }
        levels.push(RepeatLevel { level: k, noise, stats, ellipses: groups.into_iter().map(|g| g.ellipse).collect() });
    }
    #[derive(Serialize)]
    struct Body<'a> {
        levels: &'a [RepeatLevel],
    }
    ctx.write_json("repeat/repeat.json", &Body { levels: &levels })?;
    ctx.write_csv("repeat/repeat.csv", &rows)?;
    Ok(levels)
}

/// Which cable a single rollout uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cable {
    Sim,
    Tuned,
    Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResult {
    pub action: Action,
    pub endpoint: PlanePoint,
    pub endpoint_polar: PolarPoint,
    pub settle_time: f64,
    pub steps: usize,
}

/// `"θ1,θ2,r2"` or `"θ1,θ2,r2,ψ"`.
pub fn parse_action(s: &str) -> Result<Action, CliError> {
    let vals: Result<Vec<f64>, _> = s.split(',').map(|v| v.trim().parse::<f64>()).collect();
    match vals.map_err(|e| CliError::Config(format!("action {s:?}: {e}")))?.as_slice() {
        [a, b, r] => Ok(Action::a1(*a, *b, *r)),
        [a, b, r, p] => Ok(Action::a2(*a, *b, *r, *p)),
        v => Err(CliError::Config(format!("action needs 3 or 4 values, got {}", v.len()))),
    }
}

pub fn run_simulate(ctx: &Context, action: &Action, cable: Cable, out: Option<&Path>) -> Result<SimulateResult, CliError> {
    let c = &ctx.cfg;
    let params = match cable {
        Cable::Sim => c.sim_params.clone(),
        Cable::Real => c.real_params.clone(),
        Cable::Tuned => load_tuned(ctx)?,
    };
    let traj = synthesize(action, &c.sys, &c.limits)?;
    let state = reset_state(&c.sim, &c.sys)?;
    let outcome = rollout(&state, &traj, &params, &c.sim, c.sys.control_period)?;
    let result = SimulateResult {
        action: *action,
        endpoint: outcome.endpoint(),
        endpoint_polar: endpoint_polar(&outcome.state),
        settle_time: outcome.settle_time,
        steps: outcome.steps,
    };
    let trace_path = match out {
        Some(p) => p.to_path_buf(),
        None => ctx.create("simulate/trace.csv")?,
    };
    if let Some(dir) = trace_path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut buf = Vec::new();
    outcome.trace.write_csv(&mut buf, &[format!("config_hash: {}", ctx.hash)])?;
    fs::write(&trace_path, buf)?;
    ctx.write_json("simulate/endpoint.json", &result)?;
    Ok(result)
}

/// Human-readable one-liners for the stage results.
pub fn describe_tune(s: &TuneSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "tuned params: {:?}", s.params);
    let _ = writeln!(
        out,
        "objective {:.5} m (untuned {:.5}, defaults {:.5}); holdout eps_trajs {:.2}% (untuned {:.2}%, defaults {:.2}%)",
        s.best_objective,
        s.start_objective,
        s.default_objective,
        s.holdout.eps_trajs_pct,
        s.holdout_start.eps_trajs_pct,
        s.holdout_default.eps_trajs_pct
    );
    out
}

/// Every stage in dependency order, with one summary line each.
pub fn run_pipeline(ctx: &Context) -> Result<Vec<String>, CliError> {
    let mut lines = vec![ctx.stage("gen-data tune", gen_tune_data)?];
    let tuned = ctx.stage("tune", |c| run_tune(c, None))?;
    lines.push(describe_tune(&tuned).trim_end().to_string());
    lines.push(ctx.stage("gen-data sim", gen_sim_data)?);
    lines.push(ctx.stage("gen-data real", gen_real_data)?);
    for r in ctx.stage("train", |c| run_train(c, ModelChoice::All))? {
        lines.push(format!("{}: held-out median error {:?} m", r.name, r.real_holdout_median));
    }
    for r in ctx.stage("eval", |c| run_eval(c, &[], true))? {
        lines.push(format!("{}: median {:?}% of cable length", r.policy, r.median_pct));
    }
    for r in ctx.stage("coverage", run_coverage)?.runs {
        lines.push(format!("{}: coverage {:.1}%", r.label, 100.0 * r.fraction));
    }
    for l in ctx.stage("repeat", run_repeat)? {
        lines.push(format!("noise x{}: mean std {:.2}%", l.level, l.stats.mean_std_pct));
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_inline_actions() {
        assert_eq!(parse_action("-1, 0.5, 0.7").unwrap(), Action::a1(-1.0, 0.5, 0.7));
        assert_eq!(parse_action("0,0,0.6,1.2").unwrap(), Action::a2(0.0, 0.0, 0.6, 1.2));
        assert!(matches!(parse_action("1,2"), Err(CliError::Config(_))));
        assert!(matches!(parse_action("1,x,2"), Err(CliError::Config(_))));
    }

    #[test]
    fn artifacts_carry_the_hash() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { output_dir: dir.path().into(), ..ExperimentConfig::default() };
        let ctx = Context::new(cfg).unwrap();
        #[derive(Serialize)]
        struct Row {
            a: u32,
        }
        let json = fs::read_to_string(ctx.write_json("x/a.json", &Row { a: 1 }).unwrap()).unwrap();
        assert!(json.contains(&format!("\"config_hash\": \"{}\"", ctx.hash)) && json.contains("\"a\": 1"));
        let csv = fs::read_to_string(ctx.write_csv("x/a.csv", &[Row { a: 2 }]).unwrap()).unwrap();
        assert_eq!(csv, format!("# config_hash: {}\na\n2\n", ctx.hash));
        let svg = fs::read_to_string(ctx.write_svg("x/a.svg", "<svg a=\"1\"><g/></svg>").unwrap()).unwrap();
        assert_eq!(svg, format!("<svg a=\"1\">\n<!-- config_hash: {} --><g/></svg>", ctx.hash));
    }

    #[test]
    fn missing_artifact_names_its_stage() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { output_dir: dir.path().into(), ..ExperimentConfig::default() };
        let ctx = Context::new(cfg).unwrap();
        let e = load_tuned(&ctx).unwrap_err();
        assert_eq!(e.exit_code(), 4);
        assert!(e.to_string().contains("run `tune` first"));
        ctx.stage("noop", |_| Ok(())).unwrap();
        let log = fs::read_to_string(ctx.path("run.log")).unwrap();
        assert_eq!(log.lines().count(), 2);
    }
}
