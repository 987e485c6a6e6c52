//! Target-conditioned action selection over a candidate pool, the
//! polar-casting baseline, and closed evaluation of either on a target set.
//!
//! Targets are polar points about the robot base. The learned policy picks
//! the pool action whose predicted endpoint lies closest to the target; left
//! targets are answered by mirroring the choice for the reflected target.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cablesim::{perturb_state, rollout, straight_state, CableParams, NoiseSpec, SimConfig, SimError};
use crate::datasets::{DatasetError, Generator};
use crate::geometry::{polar_to_cartesian, CubicEase, PlanePoint, PolarPoint, Profile};
use crate::geometry::sample_times;
use crate::models::{ForwardModel, ModelError};
use crate::provenance::derive_seed;
use crate::stats::Summary;
use crate::trajgen::{mirror, Action, EndEffectorTrajectory, SystemParams, Waypoint, WorkspaceLimits};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("target r = {r:.3} m is beyond the reachable radius {limit:.3} m")]
    Unreachable { r: f64, limit: f64 },
    #[error("target is not a finite point")]
    InvalidTarget,
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("invalid candidate pool: {0}")]
    InvalidPool(String),
    #[error("polar cast rejected: {0}")]
    CastRejected(CastRejection),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Canonical actions with the endpoints a forward model predicts for them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    actions: Vec<Action>,
    predictions: Vec<PlanePoint>,
}

/// Index and distance of the prediction closest to `target`; ties go to the
/// lowest index.
pub fn argmin(predictions: &[PlanePoint], target: PlanePoint) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in predictions.iter().enumerate() {
        let d = p.distance(&target);
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Pool index of the chosen canonical action.
    pub index: usize,
    /// Action to execute (mirrored for left targets).
    pub action: Action,
    pub predicted: PlanePoint,
    /// Distance between prediction and target, meters.
    pub predicted_error: f64,
    pub mirrored: bool,
}

impl CandidatePool {
    pub fn new(actions: Vec<Action>, predictions: Vec<PlanePoint>) -> Result<Self, PolicyError> {
        if actions.is_empty() {
            return Err(PolicyError::EmptyPool);
        }
        if actions.len() != predictions.len() {
            return Err(PolicyError::InvalidPool(format!(
                "{} actions but {} predictions",
                actions.len(),
                predictions.len()
            )));
        }
        if let Some(i) = actions.iter().position(|a| !a.is_canonical()) {
            return Err(PolicyError::InvalidPool(format!("action {i} is not canonical")));
        }
        if let Some(i) = predictions.iter().position(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(PolicyError::InvalidPool(format!("prediction {i} is not finite")));
        }
        Ok(Self { actions, predictions })
    }

    /// Runs `model` over every action.
    pub fn from_model(actions: Vec<Action>, model: &dyn ForwardModel) -> Result<Self, PolicyError> {
        let features: Vec<Vec<f64>> = actions.iter().map(|a| a.features()).collect();
        let predictions = model.predict_many(&features)?;
        Self::new(actions, predictions)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn predictions(&self) -> &[PlanePoint] {
        &self.predictions
    }

    pub fn select(&self, target: PolarPoint, ws: &WorkspaceLimits) -> Result<Selection, PolicyError> {
        if !(target.r.is_finite() && target.theta.is_finite()) || target.r < 0.0 {
            return Err(PolicyError::InvalidTarget);
        }
        if target.r > ws.reach() + 1e-12 {
            return Err(PolicyError::Unreachable { r: target.r, limit: ws.reach() });
        }
        let mirrored = target.theta < 0.0;
        let canonical = if mirrored { target.mirrored() } else { target };
        let (index, predicted_error) =
            argmin(&self.predictions, polar_to_cartesian(canonical)).ok_or(PolicyError::EmptyPool)?;
        let (action, predicted) = if mirrored {
            (mirror(&self.actions[index]), self.predictions[index].mirrored())
        } else {
            (self.actions[index].clone(), self.predictions[index])
        };
        Ok(Selection { index, action, predicted, predicted_error, mirrored })
    }
}

/// Settings of the polar-casting baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolarCastConfig {
    /// Peak gripper speed of the pull toward the base, m/s.
    pub pull_speed: f64,
    /// Extra clearance above the table-edge limit, meters.
    pub clearance_margin: f64,
}

impl Default for PolarCastConfig {
    fn default() -> Self {
        Self { pull_speed: 0.1, clearance_margin: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error, Serialize, Deserialize)]
pub enum CastRejection {
    #[error("radius {r:.3} m beyond full extension {limit:.3} m")]
    BeyondReach { r: f64, limit: f64 },
    #[error("final gripper y {y:.3} m below the clearance limit {y_min:.3} m")]
    BelowClearance { y: f64, y_min: f64 },
}

/// Lowest gripper y allowed during a cast: beyond the robot's own table edge.
pub fn cast_clearance(ws: &WorkspaceLimits, cast: &PolarCastConfig) -> f64 {
    ws.y_min_base + cast.clearance_margin
}

/// World y of the gripper once the pull toward the base has ended.
pub fn cast_final_gripper_y(target: PolarPoint, ws: &WorkspaceLimits) -> f64 {
    (target.r - ws.r_c) * target.theta.cos()
}

pub fn check_cast(target: PolarPoint, ws: &WorkspaceLimits, cast: &PolarCastConfig) -> Result<(), CastRejection> {
    if target.r > ws.reach() + 1e-9 {
        return Err(CastRejection::BeyondReach { r: target.r, limit: ws.reach() });
    }
    let y = cast_final_gripper_y(target, ws);
    let y_min = cast_clearance(ws, cast);
    if y < y_min - 1e-9 {
        return Err(CastRejection::BelowClearance { y, y_min });
    }
    Ok(())
}

/// Rays swept when looking for the nearest castable point.
const CLAMP_RAYS: usize = 4001;

/// Nearest castable point to `target`, searched over evenly spaced rays
/// through the feasible angular range (on each ray the castable radii form
/// one interval).
pub fn clamp_to_cast_segment(target: PolarPoint, ws: &WorkspaceLimits, cast: &PolarCastConfig) -> PolarPoint {
    if check_cast(target, ws, cast).is_ok() {
        return target;
    }
    let p = polar_to_cartesian(target);
    let reach = ws.reach();
    let y_min = cast_clearance(ws, cast);
    // cos θ · (reach − r_c) ≥ y_min bounds the usable angles
    let theta_max = (y_min / ws.r_max).clamp(-1.0, 1.0).acos();
    let mut best = PolarPoint::new(reach, 0.0);
    let mut best_d = f64::INFINITY;
    for k in 0..CLAMP_RAYS {
        let theta = -theta_max + 2.0 * theta_max * k as f64 / (CLAMP_RAYS - 1) as f64;
        let c = theta.cos();
        if c <= 0.0 {
            continue;
        }
        let r_lo = (ws.r_c + y_min / c).min(reach);
        let (s, c) = theta.sin_cos();
        let along = (p.x * s + p.y * c).clamp(r_lo, reach);
        let q = PlanePoint::new(along * s, along * c);
        let d = q.distance(&p);
        if d < best_d {
            best_d = d;
            best = PolarPoint::new(along, theta);
        }
    }
    best
}

/// A scripted cast: the cable starts fully extended along the target ray
/// and the gripper pulls straight back toward the base.
#[derive(Debug, Clone, PartialEq)]
pub struct CastPlan {
    pub target: PolarPoint,
    pub pull_distance: f64,
    pub initial: crate::cablesim::CableState,
    pub trajectory: EndEffectorTrajectory,
}

/// Builds the cast for an accepted target.
pub fn polar_cast(
    target: PolarPoint,
    ws: &WorkspaceLimits,
    sys: &SystemParams,
    cfg: &SimConfig,
    cast: &PolarCastConfig,
) -> Result<CastPlan, PolicyError> {
    if !(target.r.is_finite() && target.theta.is_finite()) {
        return Err(PolicyError::InvalidTarget);
    }
    if !(cast.pull_speed > 0.0) {
        return Err(PolicyError::InvalidConfig("pull_speed must be positive".into()));
    }
    check_cast(target, ws, cast).map_err(PolicyError::CastRejected)?;
    let (s, c) = target.theta.sin_cos();
    let dir = PlanePoint::new(s, c);
    let start = PlanePoint::new(ws.r_max * s, ws.r_max * c);
    let initial = straight_state(cfg, start, sys.ee_height, dir)?;
    // the cable leaves the gripper along the yaw for a forward layout
    let yaw = if cfg.reset_layout.sign() > 0.0 { target.theta } else { target.theta + std::f64::consts::PI };
    let pull_distance = (ws.reach() - target.r).max(0.0);
    let trajectory = if pull_distance == 0.0 {
        EndEffectorTrajectory::stationary(start, yaw)
    } else {
        let ease = CubicEase::new(ws.r_max, ws.r_max - pull_distance, 1.5 * pull_distance / cast.pull_speed)
            .map_err(|e| PolicyError::InvalidConfig(e.to_string()))?;
        let mut waypoints = Vec::new();
        let mut polar = Vec::new();
        for t in sample_times(ease.duration(), sys.control_period) {
            let (r, _, _) = ease.eval(t);
            waypoints.push(Waypoint { t, gripper: PlanePoint::new(r * s, r * c), wrist_angle: yaw });
            polar.push(PolarPoint::new(r, target.theta));
        }
        EndEffectorTrajectory { waypoints, duration: ease.duration(), polar, peak_speed: ease.peak_rate() }
    };
    Ok(CastPlan { target, pull_distance, initial, trajectory })
}

/// Which policy an evaluation runs.
#[derive(Debug, Clone, Copy)]
pub enum PolicyKind<'a> {
    Learned(&'a CandidatePool),
    PolarCast(&'a PolarCastConfig),
}

impl PolicyKind<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Learned(_) => "learned",
            PolicyKind::PolarCast(_) => "polar_cast",
        }
    }
}

/// The world that realises actions: engine, system and noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluator {
    pub params: CableParams,
    pub cfg: SimConfig,
    pub sys: SystemParams,
    pub ws: WorkspaceLimits,
    pub noise: Option<NoiseSpec>,
    pub trials_per_target: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub target_index: usize,
    pub trial: usize,
    pub target: PolarPoint,
    /// Learned policy only.
    pub action: Option<Action>,
    /// Learned policy only: model distance to the target, meters.
    pub predicted_error: Option<f64>,
    /// Polar cast only: the target was outside the cast segment and the
    /// nearest segment point was cast instead.
    pub rejected: bool,
    pub executed_target: PolarPoint,
    pub endpoint: PlanePoint,
    /// Distance from endpoint to target, meters.
    pub distance: f64,
    pub off_table: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub trials: usize,
    /// Trials whose endpoint stayed on the table.
    pub included: usize,
    pub off_table: usize,
    pub rejected_targets: usize,
    pub distance_m: Option<Summary>,
    /// Distances as percent of cable length.
    pub distance_pct: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub cable_length: f64,
    pub trials: Vec<TrialRecord>,
}

/// Symmetric evaluation targets: every radius paired with ±angle.
pub fn target_grid(radii: &[f64], angles: &[f64]) -> Vec<PolarPoint> {
    let mut out = Vec::with_capacity(2 * radii.len() * angles.len());
    for &r in radii {
        for &a in angles {
            out.push(PolarPoint::new(r, -a));
            out.push(PolarPoint::new(r, a));
        }
    }
    out
}

/// Default target radii (meters) and angles (radians, mirrored to ±).
pub const DEFAULT_TARGET_RADII: [f64; 4] = [0.6, 0.8, 1.0, 1.2];
pub const DEFAULT_TARGET_ANGLES: [f64; 4] = [0.1, 0.4, 0.7, 1.0];

pub fn default_targets() -> Vec<PolarPoint> {
    target_grid(&DEFAULT_TARGET_RADII, &DEFAULT_TARGET_ANGLES)
}

impl Evaluator {
    fn trial_seed(&self, target_index: usize, trial: usize) -> u64 {
        derive_seed(self.seed, (target_index * self.trials_per_target + trial) as u64)
    }

    fn run_learned(&self, pool: &CandidatePool, target: PolarPoint, seed: u64) -> Result<(Selection, PlanePoint), PolicyError> {
        let sel = pool.select(target, &self.ws)?;
        let g = Generator { params: &self.params, cfg: &self.cfg, sys: &self.sys, noise: self.noise };
        let (endpoint, _) = g.execute(&sel.action, seed)?;
        Ok((sel, endpoint))
    }

    fn run_cast(&self, cast: &PolarCastConfig, target: PolarPoint, seed: u64) -> Result<(PolarPoint, bool, PlanePoint), PolicyError> {
        let rejected = check_cast(target, &self.ws, cast).is_err();
        let executed = clamp_to_cast_segment(target, &self.ws, cast);
        let plan = polar_cast(executed, &self.ws, &self.sys, &self.cfg, cast)?;
        let mut state = plan.initial;
        if let Some(noise) = &self.noise {
            state = perturb_state(&state, noise, seed, self.cfg.segment_length());
        }
        let out = rollout(&state, &plan.trajectory, &self.params, &self.cfg, self.sys.control_period)?;
        Ok((executed, rejected, out.endpoint()))
    }

    /// Runs every target `trials_per_target` times. Trials run in parallel;
    /// records come back in target-then-trial order.
    pub fn evaluate(&self, policy: PolicyKind<'_>, targets: &[PolarPoint]) -> Result<EvalReport, PolicyError> {
        if self.trials_per_target == 0 {
            return Err(PolicyError::InvalidConfig("trials_per_target must be ≥ 1".into()));
        }
        if let PolicyKind::Learned(pool) = policy {
            for t in targets {
                pool.select(*t, &self.ws)?;
            }
        }
        let jobs: Vec<(usize, usize)> = (0..targets.len())
            .flat_map(|i| (0..self.trials_per_target).map(move |k| (i, k)))
            .collect();
        let trials = jobs
            .par_iter()
            .map(|&(i, k)| {
                let target = targets[i];
                let seed = self.trial_seed(i, k);
                let goal = polar_to_cartesian(target);
                let record = |action, predicted_error, rejected, executed_target, endpoint: PlanePoint| TrialRecord {
                    target_index: i,
                    trial: k,
                    target,
                    action,
                    predicted_error,
                    rejected,
                    executed_target,
                    endpoint,
                    distance: endpoint.distance(&goal),
                    off_table: !self.ws.on_table(endpoint),
                };
                match policy {
                    PolicyKind::Learned(pool) => {
                        let (sel, endpoint) = self.run_learned(pool, target, seed)?;
                        Ok(record(Some(sel.action), Some(sel.predicted_error), false, target, endpoint))
                    }
                    PolicyKind::PolarCast(cast) => {
                        let (executed, rejected, endpoint) = self.run_cast(cast, target, seed)?;
                        Ok(record(None, None, rejected, executed, endpoint))
                    }
                }
            })
            .collect::<Result<Vec<_>, PolicyError>>()?;
        Ok(EvalReport { policy: policy.name().to_string(), cable_length: self.cfg.rest_length_total, trials })
    }
}

#[derive(Serialize)]
struct TrialRow {
    policy: String,
    target_index: usize,
    trial: usize,
    target_r: f64,
    target_theta: f64,
    rejected: bool,
    executed_r: f64,
    executed_theta: f64,
    theta1: Option<f64>,
    theta2: Option<f64>,
    r2: Option<f64>,
    psi: Option<f64>,
    predicted_error_m: Option<f64>,
    endpoint_x: f64,
    endpoint_y: f64,
    distance_m: f64,
    distance_pct: f64,
    off_table: bool,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    schema_version: u32,
    policy: &'a str,
    config_hash: Option<&'a str>,
    #[serde(flatten)]
    summary: EvalSummary,
}

impl EvalReport {
    /// Statistics over the trials kept by `keep`; off-table trials never
    /// enter the distance statistics.
    pub fn summarize_where<F: Fn(&TrialRecord) -> bool>(&self, keep: F) -> EvalSummary {
        let kept: Vec<&TrialRecord> = self.trials.iter().filter(|t| keep(t)).collect();
        let distances: Vec<f64> = kept.iter().filter(|t| !t.off_table).map(|t| t.distance).collect();
        let mut rejected: Vec<usize> = kept.iter().filter(|t| t.rejected).map(|t| t.target_index).collect();
        rejected.dedup();
        let meters = (!distances.is_empty()).then(|| Summary::of(&distances));
        EvalSummary {
            trials: kept.len(),
            included: distances.len(),
            off_table: kept.len() - distances.len(),
            rejected_targets: rejected.len(),
            distance_m: meters,
            distance_pct: meters.map(|s| s.scaled(100.0 / self.cable_length)),
        }
    }

    pub fn summary(&self) -> EvalSummary {
        self.summarize_where(|_| true)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PolicyError> {
        let mut w = csv::Writer::from_writer(out);
        for t in &self.trials {
            let a = t.action.as_ref();
            w.serialize(TrialRow {
                policy: self.policy.clone(),
                target_index: t.target_index,
                trial: t.trial,
                target_r: t.target.r,
                target_theta: t.target.theta,
                rejected: t.rejected,
                executed_r: t.executed_target.r,
                executed_theta: t.executed_target.theta,
                theta1: a.map(|a| a.theta1),
                theta2: a.map(|a| a.theta2),
                r2: a.map(|a| a.r2),
                psi: a.and_then(|a| a.psi),
                predicted_error_m: t.predicted_error,
                endpoint_x: t.endpoint.x,
                endpoint_y: t.endpoint.y,
                distance_m: t.distance,
                distance_pct: 100.0 * t.distance / self.cable_length,
                off_table: t.off_table,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self, config_hash: Option<&str>) -> Result<String, PolicyError> {
        let f = SummaryFile { schema_version: REPORT_SCHEMA_VERSION, policy: &self.policy, config_hash, summary: self.summary() };
        Ok(serde_json::to_string_pretty(&f)? + "\n")
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str, config_hash: Option<&str>) -> Result<(), PolicyError> {
        std::fs::create_dir_all(dir)?;
        let mut f = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
        if let Some(h) = config_hash {
            writeln!(f, "# config_hash: {h}")?;
        }
        self.write_csv(f)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.summary_json(config_hash)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::cartesian_to_polar;
    use crate::trajgen::Action;
    use proptest::prelude::*;

    fn pool() -> CandidatePool {
        let actions = vec![
            Action::a1(-1.0, 1.0, 0.6),
            Action::a1(-0.5, 0.5, 0.7),
            Action::a2(-0.8, 0.3, 0.5, 1.0),
        ];
        let preds = vec![PlanePoint::new(0.2, 1.0), PlanePoint::new(0.5, 0.8), PlanePoint::new(0.0, 1.2)];
        CandidatePool::new(actions, preds).unwrap()
    }

    #[test]
    fn exact_prediction_is_selected() {
        let ws = WorkspaceLimits::default();
        let target = cartesian_to_polar(PlanePoint::new(0.5, 0.8));
        let s = pool().select(target, &ws).unwrap();
        assert_eq!(s.index, 1);
        assert!(s.predicted_error < 1e-12);
        assert!(!s.mirrored);
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        let actions = vec![Action::a1(-1.0, 1.0, 0.6), Action::a1(-0.5, 0.5, 0.7)];
        let preds = vec![PlanePoint::new(0.0, 1.0), PlanePoint::new(0.0, 1.0)];
        let p = CandidatePool::new(actions, preds).unwrap();
        assert_eq!(p.select(PolarPoint::new(0.9, 0.0), &WorkspaceLimits::default()).unwrap().index, 0);
    }

    #[test]
    fn left_targets_use_mirrored_actions() {
        let ws = WorkspaceLimits::default();
        let right = pool().select(PolarPoint::new(0.95, 0.6), &ws).unwrap();
        let left = pool().select(PolarPoint::new(0.95, -0.6), &ws).unwrap();
        assert!(left.mirrored);
        assert_eq!(left.index, right.index);
        assert_eq!(left.action, mirror(&right.action));
        assert_eq!(left.predicted_error, right.predicted_error);
    }

    #[test]
    fn unreachable_and_bad_pools_are_errors() {
        let ws = WorkspaceLimits::default();
        assert!(matches!(pool().select(PolarPoint::new(ws.reach() + 0.01, 0.0), &ws), Err(PolicyError::Unreachable { .. })));
        assert!(matches!(CandidatePool::new(vec![], vec![]), Err(PolicyError::EmptyPool)));
        let left = vec![Action::a1(0.5, -0.5, 0.6)];
        assert!(CandidatePool::new(left, vec![PlanePoint::new(0.0, 1.0)]).is_err());
        assert!(CandidatePool::new(vec![Action::a1(-0.5, 0.5, 0.6)], vec![]).is_err());
    }

    #[test]
    fn full_extension_needs_no_pull() {
        let ws = WorkspaceLimits::default();
        let plan = polar_cast(
            PolarPoint::new(ws.reach(), 0.0),
            &ws,
            &SystemParams::default(),
            &SimConfig::default(),
            &PolarCastConfig::default(),
        )
        .unwrap();
        assert_eq!(plan.pull_distance, 0.0);
        assert_eq!(plan.trajectory.waypoints.len(), 1);
    }

    #[test]
    fn cast_pull_geometry() {
        let ws = WorkspaceLimits::default();
        let cast = PolarCastConfig::default();
        let target = PolarPoint::new(1.3, 0.2);
        let plan = polar_cast(target, &ws, &SystemParams::default(), &SimConfig::default(), &cast).unwrap();
        assert!((plan.pull_distance - (ws.reach() - 1.3)).abs() < 1e-12);
        let last = plan.trajectory.last().gripper;
        assert!((last.norm() - (ws.r_max - plan.pull_distance)).abs() < 1e-12);
        assert!((plan.trajectory.peak_speed - cast.pull_speed).abs() < 1e-12);
        let end = plan.initial.endpoint();
        assert!((cartesian_to_polar(end).theta - 0.2).abs() < 1e-9);
        assert!(end.norm() <= ws.reach() && end.norm() > ws.reach() - 0.01);
    }

    #[test]
    fn targets_below_the_clearance_line_are_rejected() {
        let ws = WorkspaceLimits::default();
        let cast = PolarCastConfig::default();
        let sys = SystemParams::default();
        let cfg = SimConfig::default();
        let below = PolarPoint::new(0.9, 0.0);
        assert!(matches!(
            polar_cast(below, &ws, &sys, &cfg, &cast),
            Err(PolicyError::CastRejected(CastRejection::BelowClearance { .. }))
        ));
        let clamped = clamp_to_cast_segment(below, &ws, &cast);
        assert!(check_cast(clamped, &ws, &cast).is_ok());
        // straight ahead the nearest castable point lies on the same ray
        assert!(clamped.theta.abs() < 1e-12);
        assert!((clamped.r - (ws.r_c + ws.y_min_base)).abs() < 1e-12);
    }

    #[test]
    fn target_grid_is_symmetric() {
        let t = default_targets();
        assert_eq!(t.len(), 32);
        for pair in t.chunks(2) {
            assert_eq!(pair[0], pair[1].mirrored());
        }
    }

    #[test]
    fn aggregate_quartiles() {
        let mk = |i: usize, d: f64, off: bool| TrialRecord {
            target_index: i,
            trial: 0,
            target: PolarPoint::new(1.0, 0.0),
            action: None,
            predicted_error: None,
            rejected: i == 0,
            executed_target: PolarPoint::new(1.0, 0.0),
            endpoint: PlanePoint::new(0.0, 1.0),
            distance: d,
            off_table: off,
        };
        let report = EvalReport {
            policy: "x".into(),
            cable_length: 0.5,
            trials: vec![mk(0, 0.1, false), mk(1, 0.2, false), mk(2, 0.3, false), mk(3, 0.4, false), mk(4, 9.0, true)],
        };
        let s = report.summary();
        let m = s.distance_m.unwrap();
        assert!((m.median - 0.25).abs() < 1e-12 && (m.q1 - 0.15).abs() < 1e-12 && (m.q3 - 0.35).abs() < 1e-12);
        assert_eq!((s.included, s.off_table, s.rejected_targets), (4, 1, 1));
        assert!((s.distance_pct.unwrap().median - 50.0).abs() < 1e-9);
    }

    /// Independent statement of the gripper pose a cast to `p` ends in:
    /// one cable length short of the target along the same ray.
    fn gripper_pose_ok(p: PlanePoint, ws: &WorkspaceLimits, slack: f64) -> bool {
        let n = p.norm();
        if n + slack < ws.r_c {
            return false;
        }
        let g = PlanePoint::new(p.x - ws.r_c * p.x / n, p.y - ws.r_c * p.y / n);
        g.norm() <= ws.r_max + slack && g.y + slack >= ws.y_min_base
    }

    proptest! {
        #[test]
        fn argmin_is_translation_invariant(
            pts in prop::collection::vec((-64i32..64, -64i32..64), 1..30),
            target in (-64i32..64, -64i32..64),
            shift in (-512i32..512, -512i32..512),
        ) {
            // dyadic coordinates keep every distance exact under translation
            let q = |v: i32| v as f64 / 64.0;
            let preds: Vec<PlanePoint> = pts.iter().map(|&(x, y)| PlanePoint::new(q(x), q(y))).collect();
            let moved: Vec<PlanePoint> = preds.iter().map(|p| p.offset(q(shift.0), q(shift.1))).collect();
            let t = PlanePoint::new(q(target.0), q(target.1));
            let a = argmin(&preds, t).unwrap();
            let b = argmin(&moved, t.offset(q(shift.0), q(shift.1))).unwrap();
            prop_assert_eq!(a.0, b.0);
        }

        #[test]
        fn selection_is_mirror_coherent(r in 0.1f64..1.47, theta in 0.0f64..1.5) {
            let ws = WorkspaceLimits::default();
            let p = pool();
            let right = p.select(PolarPoint::new(r, theta), &ws).unwrap();
            let left = p.select(PolarPoint::new(r, -theta), &ws).unwrap();
            if theta > 0.0 {
                prop_assert_eq!(left.action, mirror(&right.action));
                prop_assert_eq!(left.predicted, right.predicted.mirrored());
            }
            prop_assert_eq!(left.index, right.index);
        }

        #[test]
        fn cast_rejections_are_sound(r in 0.01f64..1.6, theta in -1.6f64..1.6) {
            let ws = WorkspaceLimits::default();
            let cast = PolarCastConfig::default();
            let t = PolarPoint::new(r, theta);
            let p = polar_to_cartesian(t);
            if check_cast(t, &ws, &cast).is_err() {
                prop_assert!(!gripper_pose_ok(p, &ws, 1e-10));
            } else {
                prop_assert!(gripper_pose_ok(p, &ws, 1e-8));
            }
            let c = clamp_to_cast_segment(t, &ws, &cast);
            prop_assert!(check_cast(c, &ws, &cast).is_ok());
            prop_assert!(polar_to_cartesian(c).distance(&p) <= polar_to_cartesian(PolarPoint::new(ws.reach(), 0.0)).distance(&p) + 1e-12);
        }
    }
}
