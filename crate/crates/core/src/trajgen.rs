//! Action variables to gripper trajectories.
//!
//! A motion starts at the reset pose `(r0, 0)` of a polar frame whose origin
//! sits `r0` behind the reset pose, arcs to `θ1`, stops, then arcs back to
//! `θ2`. The radius eases from `r0` to `r2` over the whole motion. With the
//! four-variable action set the wrist additionally rotates by `ψ − θ2` once
//! the first arc is done, so that the tool yaw ends at `ψ`.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    polar_to_cartesian, sample_times, CubicEase, GeometryError, MotionLimits, PlanePoint,
    PolarPoint, Profile, SCurve, DEFAULT_CONTROL_PERIOD,
};

pub const TRAJECTORY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("action rejected: {0}")]
    Limit(LimitViolation),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid system parameters: {0}")]
    InvalidSystem(String),
    #[error("invalid action grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fixed trajectory-shaping constants, chosen once per experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemParams {
    /// Distance from the polar-frame origin to the reset pose, meters.
    pub r0: f64,
    /// Peak angular speed of both arcs and of the wrist, rad/s.
    pub v_max: f64,
    pub control_period: f64,
    /// Gripper height above the worksurface, meters.
    pub ee_height: f64,
    /// World y of the reset gripper pose (the base is the world origin).
    pub reset_y: f64,
    /// Angular acceleration limit of the arc profiles, rad/s².
    pub a_max: f64,
    /// Angular jerk limit of the arc profiles, rad/s³.
    pub j_max: f64,
    /// Distance from the wrist axis to the cable attachment point, meters.
    pub tool_offset: f64,
    /// Cartesian gripper speed cap is `v_max · speed_cap_scale` (m/s).
    pub speed_cap_scale: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            r0: 0.6,
            v_max: 1.5,
            control_period: DEFAULT_CONTROL_PERIOD,
            ee_height: 0.02,
            reset_y: 0.7,
            a_max: 4.0,
            j_max: 40.0,
            tool_offset: 0.0,
            speed_cap_scale: 1.0,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<(), TrajError> {
        let positive = [
            ("r0", self.r0),
            ("v_max", self.v_max),
            ("control_period", self.control_period),
            ("a_max", self.a_max),
            ("j_max", self.j_max),
            ("speed_cap_scale", self.speed_cap_scale),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(TrajError::InvalidSystem(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.ee_height >= 0.0) || !(self.tool_offset >= 0.0) || !self.reset_y.is_finite() {
            return Err(TrajError::InvalidSystem("ee_height, tool_offset must be ≥ 0".into()));
        }
        Ok(())
    }

    pub fn limits(&self) -> MotionLimits {
        MotionLimits { v_max: self.v_max, a_max: self.a_max, j_max: self.j_max }
    }

    /// World position of the polar-frame origin.
    pub fn polar_origin(&self) -> PlanePoint {
        PlanePoint::new(0.0, self.reset_y - self.r0 - self.tool_offset)
    }

    pub fn reset_gripper(&self) -> PlanePoint {
        PlanePoint::new(0.0, self.reset_y)
    }

    pub fn speed_cap(&self) -> f64 {
        self.v_max * self.speed_cap_scale
    }
}

/// Table and reach limits of the workcell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkspaceLimits {
    /// Base-to-wrist reach, meters.
    pub r_max: f64,
    /// Cable length, meters.
    pub r_c: f64,
    /// Distance from the base to the edge of the robot's own table.
    pub y_min_base: f64,
    pub table_width: f64,
    pub table_depth: f64,
    /// Lowest world y the gripper may visit during a planar action.
    pub gripper_y_min: f64,
    /// Largest |θ| the arm may sweep to.
    pub theta_limit: f64,
    /// Largest wrist rotation |ψ − θ2|.
    pub wrist_limit: f64,
}

impl Default for WorkspaceLimits {
    fn default() -> Self {
        Self {
            r_max: 0.85,
            r_c: 0.62,
            y_min_base: 0.466,
            table_width: 2.75,
            table_depth: 1.5,
            gripper_y_min: 0.0,
            theta_limit: 2.8,
            wrist_limit: PI,
        }
    }
}

impl WorkspaceLimits {
    /// Radius of the semicircle any endpoint could possibly reach.
    pub fn reach(&self) -> f64 {
        self.r_max + self.r_c
    }

    pub fn on_table(&self, p: PlanePoint) -> bool {
        p.x.abs() <= 0.5 * self.table_width && p.y >= 0.0 && p.y <= self.table_depth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionSet {
    A1,
    A2,
}

impl ActionSet {
    pub fn dim(self) -> usize {
        match self {
            ActionSet::A1 => 3,
            ActionSet::A2 => 4,
        }
    }
}

/// Action variables: two arc angles, the final radius, and optionally the
/// final wrist yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub theta1: f64,
    pub theta2: f64,
    pub r2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<f64>,
}

impl Action {
    pub fn a1(theta1: f64, theta2: f64, r2: f64) -> Self {
        Self { theta1, theta2, r2, psi: None }
    }

    pub fn a2(theta1: f64, theta2: f64, r2: f64, psi: f64) -> Self {
        Self { theta1, theta2, r2, psi: Some(psi) }
    }

    /// The action that leaves the gripper at the reset pose.
    pub fn null(sys: &SystemParams) -> Self {
        Self::a1(0.0, 0.0, sys.r0)
    }

    pub fn set(&self) -> ActionSet {
        if self.psi.is_some() {
            ActionSet::A2
        } else {
            ActionSet::A1
        }
    }

    pub fn features(&self) -> Vec<f64> {
        let mut v = vec![self.theta1, self.theta2, self.r2];
        v.extend(self.psi);
        v
    }

    /// Right-side sampling convention: θ1 < 0 < θ2 and ψ ≥ θ2.
    pub fn is_canonical(&self) -> bool {
        self.theta1 < 0.0 && self.theta2 > 0.0 && self.psi.map_or(true, |p| p >= self.theta2)
    }

    fn wrist_rotation(&self) -> f64 {
        self.psi.map_or(0.0, |p| p - self.theta2)
    }

    pub fn is_finite(&self) -> bool {
        self.features().iter().all(|v| v.is_finite())
    }
}

/// `(θ1, θ2, r2, ψ) ↦ (−θ1, −θ2, r2, −ψ)`.
pub fn mirror(action: &Action) -> Action {
    Action {
        theta1: -action.theta1,
        theta2: -action.theta2,
        r2: action.r2,
        psi: action.psi.map(|p| -p),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    /// Cable attachment point in world coordinates.
    pub gripper: PlanePoint,
    /// Tool yaw in the world frame, radians (0 = facing +y).
    pub wrist_angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndEffectorTrajectory {
    pub waypoints: Vec<Waypoint>,
    pub duration: f64,
    /// Wrist position in the polar frame, one per waypoint.
    pub polar: Vec<PolarPoint>,
    /// Largest gripper speed along the path, m/s.
    pub peak_speed: f64,
}

impl EndEffectorTrajectory {
    /// A single-waypoint trajectory holding `gripper` still.
    pub fn stationary(gripper: PlanePoint, wrist_angle: f64) -> Self {
        Self {
            waypoints: vec![Waypoint { t: 0.0, gripper, wrist_angle }],
            duration: 0.0,
            polar: Vec::new(),
            peak_speed: 0.0,
        }
    }

    pub fn first(&self) -> &Waypoint {
        &self.waypoints[0]
    }

    pub fn last(&self) -> &Waypoint {
        self.waypoints.last().expect("trajectory has at least one waypoint")
    }

    /// Linear interpolation of gripper position and yaw at time `t`.
    pub fn at(&self, t: f64) -> (PlanePoint, f64) {
        let w = &self.waypoints;
        if t <= w[0].t {
            return (w[0].gripper, w[0].wrist_angle);
        }
        let last = self.last();
        if t >= last.t {
            return (last.gripper, last.wrist_angle);
        }
        let i = match w.binary_search_by(|p| p.t.partial_cmp(&t).unwrap()) {
            Ok(i) => return (w[i].gripper, w[i].wrist_angle),
            Err(i) => i,
        };
        let (a, b) = (&w[i - 1], &w[i]);
        let s = (t - a.t) / (b.t - a.t);
        let lerp = |u: f64, v: f64| u + (v - u) * s;
        (
            PlanePoint::new(lerp(a.gripper.x, b.gripper.x), lerp(a.gripper.y, b.gripper.y)),
            lerp(a.wrist_angle, b.wrist_angle),
        )
    }

    /// Mirror image across the y axis.
    pub fn mirrored(&self) -> Self {
        Self {
            waypoints: self
                .waypoints
                .iter()
                .map(|w| Waypoint { t: w.t, gripper: w.gripper.mirrored(), wrist_angle: -w.wrist_angle })
                .collect(),
            duration: self.duration,
            polar: self.polar.iter().map(|p| p.mirrored()).collect(),
            peak_speed: self.peak_speed,
        }
    }

    /// One JSON object per waypoint: `{"schema_version", "t", "x", "y", "wrist"}`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), TrajError> {
        for w in &self.waypoints {
            let line = serde_json::json!({
                "schema_version": TRAJECTORY_SCHEMA_VERSION,
                "t": w.t,
                "x": w.gripper.x,
                "y": w.gripper.y,
                "wrist": w.wrist_angle,
            });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, TrajError> {
        #[derive(Deserialize)]
        struct Row {
            schema_version: u32,
            t: f64,
            x: f64,
            y: f64,
            wrist: f64,
        }
        let mut waypoints = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(&line)
                .map_err(|e| TrajError::Parse { line: idx + 1, message: e.to_string() })?;
            if row.schema_version != TRAJECTORY_SCHEMA_VERSION {
                return Err(TrajError::Parse {
                    line: idx + 1,
                    message: format!("unsupported schema_version {}", row.schema_version),
                });
            }
            if let Some(prev) = waypoints.last().map(|w: &Waypoint| w.t) {
                if row.t <= prev {
                    return Err(TrajError::Parse { line: idx + 1, message: "time not increasing".into() });
                }
            }
            waypoints.push(Waypoint { t: row.t, gripper: PlanePoint::new(row.x, row.y), wrist_angle: row.wrist });
        }
        if waypoints.is_empty() {
            return Err(TrajError::Parse { line: 0, message: "no waypoints".into() });
        }
        let duration = waypoints.last().unwrap().t;
        let peak_speed = waypoints
            .windows(2)
            .map(|w| w[0].gripper.distance(&w[1].gripper) / (w[1].t - w[0].t))
            .fold(0.0, f64::max);
        Ok(Self { waypoints, duration, polar: Vec::new(), peak_speed })
    }
}

/// Builds the trajectory without consulting workspace limits.
pub fn plan(action: &Action, sys: &SystemParams) -> Result<EndEffectorTrajectory, TrajError> {
    sys.validate()?;
    if !action.is_finite() || !(action.r2 >= 0.0) {
        return Err(TrajError::InvalidAction(format!("{action:?}")));
    }
    let limits = sys.limits();
    let arc1 = SCurve::plan(0.0, action.theta1, limits);
    let arc2 = SCurve::plan(action.theta1, action.theta2, limits);
    let wrist = SCurve::plan(0.0, action.wrist_rotation(), limits);
    let t1 = arc1.duration();
    let mut total = (t1 + arc2.duration()).max(t1 + wrist.duration());
    let radial_change = action.r2 - sys.r0;
    if total == 0.0 && radial_change != 0.0 {
        // pure radial move: pace the ease so its peak speed meets the cap
        total = 1.5 * radial_change.abs() / sys.speed_cap();
    }
    let radial = if total > 0.0 { Some(CubicEase::new(sys.r0, action.r2, total)?) } else { None };

    let origin = sys.polar_origin();
    let times = sample_times(total, sys.control_period);
    let mut waypoints = Vec::with_capacity(times.len());
    let mut polar = Vec::with_capacity(times.len());
    let mut peak_speed = 0.0f64;
    for t in times {
        let (theta, theta_rate) = if t < t1 {
            let (v, d, _) = arc1.eval(t);
            (v, d)
        } else {
            let (v, d, _) = arc2.eval(t - t1);
            (v, d)
        };
        let (rel, rel_rate) = if t < t1 {
            (0.0, 0.0)
        } else {
            let (v, d, _) = wrist.eval(t - t1);
            (v, d)
        };
        let (r, r_rate) = match &radial {
            Some(ease) => {
                let (v, d, _) = ease.eval(t);
                (v, d)
            }
            None => (sys.r0, 0.0),
        };
        let yaw = theta + rel;
        let yaw_rate = theta_rate + rel_rate;
        let wrist_pt = polar_to_cartesian(PolarPoint::new(r, theta));
        let tool = polar_to_cartesian(PolarPoint::new(sys.tool_offset, yaw));
        let gripper = PlanePoint::new(origin.x + wrist_pt.x + tool.x, origin.y + wrist_pt.y + tool.y);

        let (s, c) = theta.sin_cos();
        let (ys, yc) = yaw.sin_cos();
        let vx = r_rate * s + r * theta_rate * c + sys.tool_offset * yaw_rate * yc;
        let vy = r_rate * c - r * theta_rate * s - sys.tool_offset * yaw_rate * ys;
        peak_speed = peak_speed.max(vx.hypot(vy));

        waypoints.push(Waypoint { t, gripper, wrist_angle: yaw });
        polar.push(PolarPoint::new(r, theta));
    }
    Ok(EndEffectorTrajectory { waypoints, duration: total, polar, peak_speed })
}

/// Why an action was filtered out.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LimitViolation {
    #[error("radial reach: wrist reaches {reach:.3} m > r_max {r_max:.3} m")]
    RadialReach { reach: f64, r_max: f64 },
    #[error("table-edge clearance: gripper y {y:.3} m < {y_min:.3} m")]
    TableClearance { y: f64, y_min: f64 },
    #[error("angular span: {what} {value:.3} rad exceeds {limit:.3} rad")]
    AngularSpan { what: &'static str, value: f64, limit: f64 },
    #[error("velocity limit: gripper speed {speed:.3} m/s > cap {cap:.3} m/s")]
    VelocityLimit { speed: f64, cap: f64 },
}

impl LimitViolation {
    /// Short stable name of the violated limit.
    pub fn name(&self) -> &'static str {
        match self {
            LimitViolation::RadialReach { .. } => "radial reach",
            LimitViolation::TableClearance { .. } => "table-edge clearance",
            LimitViolation::AngularSpan { .. } => "angular span",
            LimitViolation::VelocityLimit { .. } => "velocity limit",
        }
    }
}

fn check_planned(
    action: &Action,
    traj: &EndEffectorTrajectory,
    sys: &SystemParams,
    ws: &WorkspaceLimits,
) -> Result<(), LimitViolation> {
    let origin = sys.polar_origin();
    let reach = traj
        .polar
        .iter()
        .map(|p| {
            let w = polar_to_cartesian(*p);
            (origin.x + w.x).hypot(origin.y + w.y)
        })
        .fold(0.0, f64::max);
    if reach > ws.r_max + 1e-12 {
        return Err(LimitViolation::RadialReach { reach, r_max: ws.r_max });
    }
    let lowest = traj.waypoints.iter().map(|w| w.gripper.y).fold(f64::INFINITY, f64::min);
    if lowest < ws.gripper_y_min {
        return Err(LimitViolation::TableClearance { y: lowest, y_min: ws.gripper_y_min });
    }
    for (what, value) in [("theta1", action.theta1), ("theta2", action.theta2)] {
        if value.abs() > ws.theta_limit {
            return Err(LimitViolation::AngularSpan { what, value, limit: ws.theta_limit });
        }
    }
    let rotation = action.wrist_rotation();
    if rotation.abs() > ws.wrist_limit {
        return Err(LimitViolation::AngularSpan { what: "wrist rotation", value: rotation, limit: ws.wrist_limit });
    }
    let cap = sys.speed_cap();
    if traj.peak_speed > cap + 1e-9 {
        return Err(LimitViolation::VelocityLimit { speed: traj.peak_speed, cap });
    }
    Ok(())
}

/// Whether an action stays inside the workspace and speed limits.
pub fn check_limits(
    action: &Action,
    sys: &SystemParams,
    ws: &WorkspaceLimits,
) -> Result<(), LimitViolation> {
    match plan(action, sys) {
        Ok(traj) => check_planned(action, &traj, sys, ws),
        Err(_) => Err(LimitViolation::AngularSpan { what: "non-finite action", value: f64::NAN, limit: ws.theta_limit }),
    }
}

/// Plans the trajectory and rejects it if it violates any limit.
pub fn synthesize(
    action: &Action,
    sys: &SystemParams,
    ws: &WorkspaceLimits,
) -> Result<EndEffectorTrajectory, TrajError> {
    let traj = plan(action, sys)?;
    check_planned(action, &traj, sys, ws).map_err(TrajError::Limit)?;
    Ok(traj)
}

/// Inclusive ranges of each action variable. The wrist variable is sampled
/// as an offset above θ2, so `ψ = θ2 + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionBounds {
    pub theta1: (f64, f64),
    pub theta2: (f64, f64),
    pub r2: (f64, f64),
    pub psi_offset: (f64, f64),
}

impl Default for ActionBounds {
    fn default() -> Self {
        Self {
            theta1: (-2.6, -0.1),
            theta2: (0.1, 2.6),
            r2: (0.3, 0.9),
            psi_offset: (0.0, PI),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionGrid {
    pub set: ActionSet,
    /// Samples per variable, in declaration order.
    pub counts: Vec<usize>,
    #[serde(default)]
    pub bounds: ActionBounds,
}

impl ActionGrid {
    pub fn new(set: ActionSet, counts: &[usize]) -> Self {
        Self { set, counts: counts.to_vec(), bounds: ActionBounds::default() }
    }

    pub fn size(&self) -> usize {
        self.counts.iter().product()
    }
}

fn axis(range: (f64, f64), count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.5 * (range.0 + range.1)];
    }
    (0..count)
        .map(|i| range.0 + (range.1 - range.0) * i as f64 / (count - 1) as f64)
        .collect()
}

/// The Cartesian product of evenly spaced samples, filtered through
/// [`check_limits`], in row-major order.
pub fn grid_sample_actions(
    grid: &ActionGrid,
    sys: &SystemParams,
    ws: &WorkspaceLimits,
) -> Result<Vec<Action>, TrajError> {
    if grid.counts.len() != grid.set.dim() {
        return Err(TrajError::InvalidGrid(format!(
            "{:?} needs {} counts, got {}",
            grid.set,
            grid.set.dim(),
            grid.counts.len()
        )));
    }
    if grid.counts.iter().any(|&c| c == 0) {
        return Err(TrajError::InvalidGrid("every count must be ≥ 1".into()));
    }
    let b = &grid.bounds;
    let ranges = [("theta1", b.theta1), ("theta2", b.theta2), ("r2", b.r2), ("psi_offset", b.psi_offset)];
    for (name, (lo, hi)) in ranges.iter().take(grid.set.dim()) {
        if !(lo <= hi) {
            return Err(TrajError::InvalidGrid(format!("{name} bounds inverted: [{lo}, {hi}]")));
        }
    }
    if !(b.theta1.1 < 0.0) || !(b.theta2.0 > 0.0) || (grid.set == ActionSet::A2 && b.psi_offset.0 < 0.0) {
        return Err(TrajError::InvalidGrid("bounds must satisfy θ1 < 0 < θ2 and ψ ≥ θ2".into()));
    }
    let t1s = axis(b.theta1, grid.counts[0]);
    let t2s = axis(b.theta2, grid.counts[1]);
    let r2s = axis(b.r2, grid.counts[2]);
    let offsets = match grid.set {
        ActionSet::A1 => vec![None],
        ActionSet::A2 => axis(b.psi_offset, grid.counts[3]).into_iter().map(Some).collect(),
    };
    let mut out = Vec::new();
    for &t1 in &t1s {
        for &t2 in &t2s {
            for &r2 in &r2s {
                for off in &offsets {
                    let action = Action { theta1: t1, theta2: t2, r2, psi: off.map(|o| t2 + o) };
                    if check_limits(&action, sys, ws).is_ok() {
                        out.push(action);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// An evenly thinned grid of exactly `target` limit-passing actions: the
/// per-axis count grows until the filtered grid holds at least `target`
/// actions, then every k-th action is kept.
pub fn grid_of_size(
    set: ActionSet,
    bounds: &ActionBounds,
    target: usize,
    sys: &SystemParams,
    ws: &WorkspaceLimits,
) -> Result<Vec<Action>, TrajError> {
    if target == 0 {
        return Err(TrajError::InvalidGrid("target size must be positive".into()));
    }
    for n in 2..=200 {
        let grid = ActionGrid { set, counts: vec![n; set.dim()], bounds: bounds.clone() };
        let all = grid_sample_actions(&grid, sys, ws)?;
        if all.len() >= target {
            return Ok((0..target).map(|i| all[i * all.len() / target].clone()).collect());
        }
    }
    Err(TrajError::InvalidGrid(format!("no grid up to 200 per axis yields {target} valid actions")))
}

/// `count` actions drawn uniformly from `bounds` and kept only if they pass
/// [`check_limits`]. Gives up after `1000 · count` draws.
pub fn random_actions(
    set: ActionSet,
    bounds: &ActionBounds,
    count: usize,
    sys: &SystemParams,
    ws: &WorkspaceLimits,
    seed: u64,
) -> Result<Vec<Action>, TrajError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |(lo, hi): (f64, f64)| if lo < hi { rng.random_range(lo..hi) } else { lo };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count.saturating_mul(1000) {
        if out.len() == count {
            break;
        }
        let (t1, t2, r2) = (draw(bounds.theta1), draw(bounds.theta2), draw(bounds.r2));
        let psi = match set {
            ActionSet::A1 => None,
            ActionSet::A2 => Some(t2 + draw(bounds.psi_offset)),
        };
        let action = Action { theta1: t1, theta2: t2, r2, psi };
        if check_limits(&action, sys, ws).is_ok() {
            out.push(action);
        }
    }
    if out.len() < count {
        return Err(TrajError::InvalidGrid(format!("only {} of {count} random actions passed the limits", out.len())));
    }
    Ok(out)
}
