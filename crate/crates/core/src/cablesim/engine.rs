use serde::{Deserialize, Serialize};

use super::params::{CableParams, ResetLayout, SimConfig};
use super::trace::{TrajectoryTrace, TRACE_SPACING_MS};
use super::vec3::Vec3;
use super::SimError;
use crate::geometry::{cartesian_to_polar, PlanePoint, PolarPoint};
use crate::trajgen::{EndEffectorTrajectory, SystemParams};

/// Nodes at or below this height count as touching the worksurface.
const CONTACT_EPS: f64 = 1e-7;
/// Bending terms are skipped when a segment's footprint is shorter than
/// this fraction of its rest length.
const MIN_PLANAR_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CableState {
    /// N+1 node positions, gripper first, endpoint last.
    pub nodes: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub gripped_index: usize,
}

impl CableState {
    pub fn n_segments(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn endpoint(&self) -> PlanePoint {
        let e = self.nodes[self.nodes.len() - 1];
        PlanePoint::new(e.x, e.y)
    }

    pub fn gripper(&self) -> Vec3 {
        self.nodes[self.gripped_index]
    }

    /// Largest `|len/rest − 1|` over all segments.
    pub fn max_strain(&self, rest: f64) -> f64 {
        self.nodes.windows(2).map(|w| ((w[1] - w[0]).norm() / rest - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Kinetic energy of the free nodes, joules.
    pub fn kinetic_energy(&self, params: &CableParams) -> f64 {
        let masses = node_masses(self.nodes.len(), params);
        kinetic_energy(&self.velocities, &masses)
    }

    pub fn is_finite(&self) -> bool {
        self.nodes.iter().chain(&self.velocities).all(|v| v.is_finite())
    }

    pub fn mirrored(&self) -> Self {
        let m = |v: &Vec3| Vec3::new(-v.x, v.y, v.z);
        Self {
            nodes: self.nodes.iter().map(m).collect(),
            velocities: self.velocities.iter().map(m).collect(),
            gripped_index: self.gripped_index,
        }
    }
}

/// Endpoint position in polar form about the robot base.
pub fn endpoint_polar(state: &CableState) -> PolarPoint {
    cartesian_to_polar(state.endpoint())
}

fn node_masses(n_nodes: usize, params: &CableParams) -> Vec<f64> {
    let mut m = vec![params.mass_per_segment; n_nodes];
    m[n_nodes - 1] *= params.endpoint_mass_scale;
    m
}

fn kinetic_energy(velocities: &[Vec3], masses: &[f64]) -> f64 {
    velocities.iter().zip(masses).skip(1).map(|(v, m)| 0.5 * m * v.norm_squared()).sum()
}

/// Straight cable along the y axis from the reset gripper, away from the base
/// or toward it depending on `cfg.reset_layout`.
pub fn reset_state(cfg: &SimConfig, sys: &SystemParams) -> Result<CableState, SimError> {
    cfg.validate()?;
    let grip = sys.reset_gripper();
    let dir = cfg.reset_layout.sign();
    let state = straight_state(cfg, grip, sys.ee_height, PlanePoint::new(0.0, dir))?;
    if cfg.reset_layout == ResetLayout::Trailing && state.endpoint().y < -1e-12 {
        return Err(SimError::NoRoom(format!(
            "cable needs {:.3} m behind the gripper, only {:.3} m available",
            grip.y - state.endpoint().y,
            grip.y
        )));
    }
    Ok(state)
}

/// Cable at rest, straight along the unit plane direction `dir` from a
/// gripper held `height` above the plane. The first few segments slope down
/// (each dropping at most 70% of a segment length); the rest lie flat.
pub fn straight_state(cfg: &SimConfig, gripper: PlanePoint, height: f64, dir: PlanePoint) -> Result<CableState, SimError> {
    cfg.validate()?;
    if !((dir.norm() - 1.0).abs() < 1e-9) {
        return Err(SimError::InvalidState(format!("direction {dir:?} is not a unit vector")));
    }
    let n = cfg.n_segments;
    let l = cfg.segment_length();
    let h = height.max(0.0);
    let sloped = if h > 0.0 { (h / (0.7 * l)).ceil() as usize } else { 0 };
    if sloped > n {
        return Err(SimError::NoRoom(format!("{sloped} segments needed to reach the table, cable has {n}")));
    }
    let drop = if sloped > 0 { h / sloped as f64 } else { 0.0 };
    let run = (l * l - drop * drop).sqrt();
    let mut nodes = Vec::with_capacity(n + 1);
    let mut p = Vec3::new(gripper.x, gripper.y, h);
    nodes.push(p);
    for i in 0..n {
        let (step, z) = if i < sloped { (run, if i + 1 == sloped { 0.0 } else { p.z - drop }) } else { (l, 0.0) };
        p = Vec3::new(p.x + dir.x * step, p.y + dir.y * step, z);
        nodes.push(p);
    }
    Ok(CableState { velocities: vec![Vec3::ZERO; n + 1], nodes, gripped_index: 0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Motion,
    Settle,
}

/// What an observer sees after every physics step.
#[derive(Debug)]
pub struct StepInfo<'a> {
    pub step: usize,
    pub t: f64,
    pub phase: Phase,
    /// Set when the step ends exactly on a control tick.
    pub tick: Option<usize>,
    pub gripper_target: Vec3,
    pub nodes: &'a [Vec3],
    pub velocities: &'a [Vec3],
    pub kinetic_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutOutcome {
    pub state: CableState,
    pub trace: TrajectoryTrace,
    /// Seconds simulated after the gripper stopped.
    pub settle_time: f64,
    /// False when the settle phase hit its timeout.
    pub settled: bool,
    pub steps: usize,
}

impl RolloutOutcome {
    pub fn endpoint(&self) -> PlanePoint {
        self.state.endpoint()
    }
}

/// Number of physics steps per control interval and their length.
pub fn substeps(interval: f64, dt: f64) -> (usize, f64) {
    let m = ((interval / dt) - 1e-9).ceil().max(1.0) as usize;
    (m, interval / m as f64)
}

struct Integrator {
    g: f64,
    mu_g: f64,
    k_bend: f64,
    c_ang: f64,
    lin_damp: f64,
    blowup: f64,
    iterations: usize,
    rest: f64,
    mass: Vec<f64>,
    inv_mass: Vec<f64>,
    x: Vec<Vec3>,
    v: Vec<Vec3>,
    p: Vec<Vec3>,
    f: Vec<Vec3>,
    contact: Vec<bool>,
    u: Vec<Vec3>,
    len: Vec<f64>,
    diag: Vec<f64>,
    off: Vec<f64>,
    rhs: Vec<f64>,
    lambda: Vec<f64>,
    yaw: f64,
    lead: f64,
    step: usize,
}

fn perp(x: f64, y: f64) -> (f64, f64) {
    (-y, x)
}

impl Integrator {
    fn new(state: &CableState, params: &CableParams, cfg: &SimConfig, yaw: f64) -> Self {
        let n = state.nodes.len();
        let mass = node_masses(n, params);
        let mut inv_mass: Vec<f64> = mass.iter().map(|m| 1.0 / m).collect();
        inv_mass[0] = 0.0;
        let l = cfg.segment_length();
        Self {
            g: cfg.gravity,
            mu_g: params.effective_friction() * cfg.gravity,
            k_bend: params.bend_stiffness,
            c_ang: params.angular_damping * params.mass_per_segment * l * l,
            lin_damp: params.linear_damping,
            blowup: cfg.blowup_speed,
            iterations: cfg.projection_iterations,
            rest: l,
            mass,
            inv_mass,
            x: state.nodes.clone(),
            v: state.velocities.clone(),
            p: state.nodes.clone(),
            f: vec![Vec3::ZERO; n],
            contact: vec![false; n],
            u: vec![Vec3::ZERO; n - 1],
            len: vec![0.0; n - 1],
            diag: vec![0.0; n - 1],
            off: vec![0.0; n - 1],
            rhs: vec![0.0; n - 1],
            lambda: vec![0.0; n - 1],
            yaw,
            lead: cfg.reset_layout.sign(),
            step: 0,
        }
    }

    fn state(&self) -> CableState {
        CableState { nodes: self.x.clone(), velocities: self.v.clone(), gripped_index: 0 }
    }

    fn kinetic_energy(&self) -> f64 {
        kinetic_energy(&self.v, &self.mass)
    }

    /// Adds the spring and damping forces of one planar angle `φ` whose
    /// gradient with respect to the nodes `idx` is `grad`.
    fn angular_term(&mut self, phi: f64, extra_rate: f64, idx: [usize; 3], grad: [(f64, f64); 3]) {
        let mut rate = extra_rate;
        for (i, g) in idx.iter().zip(&grad) {
            rate += g.0 * self.v[*i].x + g.1 * self.v[*i].y;
        }
        let s = -(self.k_bend * phi + self.c_ang * rate);
        for (i, g) in idx.iter().zip(&grad) {
            self.f[*i].x += s * g.0;
            self.f[*i].y += s * g.1;
        }
    }

    fn accumulate_forces(&mut self, yaw_rate: f64) {
        let n = self.x.len();
        let min_sq = (MIN_PLANAR_FRACTION * self.rest).powi(2);
        for (f, m) in self.f.iter_mut().zip(&self.mass) {
            *f = Vec3::new(0.0, 0.0, -m * self.g);
        }

        // clamp between the cable's leaving direction and the first segment
        let (dx, dy) = (self.lead * self.yaw.sin(), self.lead * self.yaw.cos());
        let e = self.x[1] - self.x[0];
        let e_sq = e.x * e.x + e.y * e.y;
        if e_sq > min_sq {
            let phi = (dx * e.y - dy * e.x).atan2(dx * e.x + dy * e.y);
            let (px, py) = perp(e.x, e.y);
            let g1 = (px / e_sq, py / e_sq);
            // φ = angle(e) − angle(d), and angle(d) turns at −yaw_rate
            let rate0 = yaw_rate - (g1.0 * self.v[0].x + g1.1 * self.v[0].y);
            self.angular_term(phi, rate0, [1, 1, 1], [g1, (0.0, 0.0), (0.0, 0.0)]);
        }

        for i in 1..n - 1 {
            let a = self.x[i] - self.x[i - 1];
            let b = self.x[i + 1] - self.x[i];
            let a_sq = a.x * a.x + a.y * a.y;
            let b_sq = b.x * b.x + b.y * b.y;
            if a_sq <= min_sq || b_sq <= min_sq {
                continue;
            }
            let phi = (a.x * b.y - a.y * b.x).atan2(a.x * b.x + a.y * b.y);
            let (pax, pay) = perp(a.x, a.y);
            let (pbx, pby) = perp(b.x, b.y);
            let ga = (pax / a_sq, pay / a_sq);
            let gb = (pbx / b_sq, pby / b_sq);
            let gi = (-ga.0 - gb.0, -ga.1 - gb.1);
            if i == 1 {
                // node 0 is kinematic: its motion feeds the rate but takes no force
                let rate0 = ga.0 * self.v[0].x + ga.1 * self.v[0].y;
                self.angular_term(phi, rate0, [i, i + 1, i + 1], [gi, gb, (0.0, 0.0)]);
            } else {
                self.angular_term(phi, 0.0, [i - 1, i, i + 1], [ga, gi, gb]);
            }
        }
    }

    fn clamp_to_plane(&mut self) {
        for p in self.p.iter_mut().skip(1) {
            if p.z < 0.0 {
                p.z = 0.0;
            }
        }
    }

    /// Newton steps on the chain's distance constraints. Each step solves
    /// the tridiagonal system `J W Jᵀ λ = C` exactly.
    fn project(&mut self) {
        let segs = self.u.len();
        for _ in 0..self.iterations {
            for i in 0..segs {
                let d = self.p[i + 1] - self.p[i];
                let len = d.norm();
                self.len[i] = len;
                self.u[i] = if len > 1e-12 { d * (1.0 / len) } else { Vec3::ZERO };
                self.rhs[i] = len - self.rest;
            }
            for i in 0..segs {
                self.diag[i] = self.inv_mass[i] + self.inv_mass[i + 1];
                if i + 1 < segs {
                    self.off[i] = -self.inv_mass[i + 1] * self.u[i].dot(self.u[i + 1]);
                }
            }
            // Thomas algorithm
            for i in 1..segs {
                let w = self.off[i - 1] / self.diag[i - 1];
                self.diag[i] -= w * self.off[i - 1];
                self.rhs[i] -= w * self.rhs[i - 1];
            }
            self.lambda[segs - 1] = self.rhs[segs - 1] / self.diag[segs - 1];
            for i in (0..segs - 1).rev() {
                self.lambda[i] = (self.rhs[i] - self.off[i] * self.lambda[i + 1]) / self.diag[i];
            }
            for j in 1..self.p.len() {
                let mut dp = Vec3::ZERO;
                if j < segs {
                    dp += self.u[j] * self.lambda[j];
                }
                dp -= self.u[j - 1] * self.lambda[j - 1];
                self.p[j] += dp * self.inv_mass[j];
            }
            self.clamp_to_plane();
        }
    }

    fn advance(&mut self, target: Vec3, yaw: f64, h: f64) -> Result<(), SimError> {
        let yaw_rate = (yaw - self.yaw) / h;
        self.accumulate_forces(yaw_rate);
        self.yaw = yaw;
        let n = self.x.len();
        let decel = self.mu_g * h;
        let damp = 1.0 / (1.0 + self.lin_damp * h);
        for i in 1..n {
            self.contact[i] = self.x[i].z <= CONTACT_EPS;
            let mut v = self.v[i] + self.f[i] * (h * self.inv_mass[i]);
            if self.contact[i] {
                let speed = v.x.hypot(v.y);
                if speed <= decel {
                    v.x = 0.0;
                    v.y = 0.0;
                } else {
                    let s = 1.0 - decel / speed;
                    v.x *= s;
                    v.y *= s;
                }
            }
            v = v * damp;
            self.v[i] = v;
            self.p[i] = self.x[i] + v * h;
        }
        self.p[0] = target;
        self.clamp_to_plane();
        self.project();

        let inv_h = 1.0 / h;
        let cap_sq = self.blowup * self.blowup;
        for i in 0..n {
            let v = (self.p[i] - self.x[i]) * inv_h;
            let sq = v.norm_squared();
            if !(sq <= cap_sq) || !self.p[i].is_finite() {
                return Err(SimError::BlowUp { step: self.step, node: i, speed: sq.sqrt() });
            }
            self.v[i] = v;
            self.x[i] = self.p[i];
        }
        self.step += 1;
        Ok(())
    }
}

/// Collects endpoint samples every 100 ms by interpolating between steps.
struct TraceSampler {
    samples: Vec<PlanePoint>,
    prev_t: f64,
    prev: PlanePoint,
}

impl TraceSampler {
    fn next_time(&self) -> f64 {
        (self.samples.len() as u64 + 1) as f64 * TRACE_SPACING_MS as f64 / 1000.0
    }

    fn record(&mut self, t: f64, p: PlanePoint) {
        loop {
            let ts = self.next_time();
            if ts > t + 1e-12 {
                break;
            }
            let s = if t > self.prev_t { ((ts - self.prev_t) / (t - self.prev_t)).clamp(0.0, 1.0) } else { 1.0 };
            self.samples.push(PlanePoint::new(
                self.prev.x + (p.x - self.prev.x) * s,
                self.prev.y + (p.y - self.prev.y) * s,
            ));
        }
        self.prev_t = t;
        self.prev = p;
    }

    fn finish(mut self, t_end: f64, last: PlanePoint) -> TrajectoryTrace {
        let duration_ms = (t_end * 1000.0 + 1e-6).floor() as u64;
        let count = TrajectoryTrace::sample_count(duration_ms);
        self.samples.truncate(count);
        while self.samples.len() < count {
            self.samples.push(last);
        }
        TrajectoryTrace { waypoints: self.samples, duration_ms }
    }
}

fn endpoint_of(x: &[Vec3]) -> PlanePoint {
    let e = x[x.len() - 1];
    PlanePoint::new(e.x, e.y)
}

/// Drives node 0 along `traj`, then lets the cable settle.
pub fn rollout(
    state: &CableState,
    traj: &EndEffectorTrajectory,
    params: &CableParams,
    cfg: &SimConfig,
    control_period: f64,
) -> Result<RolloutOutcome, SimError> {
    rollout_observed(state, traj, params, cfg, control_period, |_| {})
}

/// [`rollout`] with a callback after every physics step.
pub fn rollout_observed<F: FnMut(&StepInfo)>(
    state: &CableState,
    traj: &EndEffectorTrajectory,
    params: &CableParams,
    cfg: &SimConfig,
    control_period: f64,
    mut observer: F,
) -> Result<RolloutOutcome, SimError> {
    params.validate()?;
    cfg.validate()?;
    if state.nodes.len() != cfg.n_segments + 1 || state.velocities.len() != state.nodes.len() {
        return Err(SimError::InvalidState("node count does not match n_segments".into()));
    }
    if !(control_period > 0.0) {
        return Err(SimError::InvalidConfig("control period must be positive".into()));
    }
    let first = traj.first();
    let mut sim = Integrator::new(state, params, cfg, first.wrist_angle);
    let z = state.nodes[0].z;
    let to3 = |p: PlanePoint| Vec3::new(p.x, p.y, z);
    let mut sampler = TraceSampler { samples: Vec::new(), prev_t: 0.0, prev: endpoint_of(&sim.x) };

    let mut notify = |sim: &Integrator, t: f64, phase: Phase, tick: Option<usize>, target: Vec3| {
        observer(&StepInfo {
            step: sim.step,
            t,
            phase,
            tick,
            gripper_target: target,
            nodes: &sim.x,
            velocities: &sim.v,
            kinetic_energy: sim.kinetic_energy(),
        });
    };

    let mut tick = 0usize;
    for w in traj.waypoints.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (m, h) = substeps(b.t - a.t, cfg.dt);
        let (pa, pb) = (to3(a.gripper), to3(b.gripper));
        for j in 1..=m {
            let (target, yaw, t, at_tick) = if j == m {
                (pb, b.wrist_angle, b.t, true)
            } else {
                let s = j as f64 / m as f64;
                (pa + (pb - pa) * s, a.wrist_angle + (b.wrist_angle - a.wrist_angle) * s, a.t + j as f64 * h, false)
            };
            sim.advance(target, yaw, h)?;
            if at_tick {
                tick += 1;
            }
            sampler.record(t, endpoint_of(&sim.x));
            notify(&sim, t, Phase::Motion, at_tick.then_some(tick), target);
        }
    }

    let last = traj.last();
    let hold = to3(last.gripper);
    let t_motion = last.t;
    let (m, h) = substeps(control_period, cfg.dt);
    let mut still = 0.0;
    let mut settle_steps = 0usize;
    let max_steps = (cfg.settle_timeout / h).round() as usize;
    let mut settled = false;
    while settle_steps < max_steps {
        sim.advance(hold, last.wrist_angle, h)?;
        settle_steps += 1;
        let t = t_motion + settle_steps as f64 * h;
        let at_tick = settle_steps % m == 0;
        if at_tick {
            tick += 1;
        }
        sampler.record(t, endpoint_of(&sim.x));
        let ke = sim.kinetic_energy();
        notify(&sim, t, Phase::Settle, at_tick.then_some(tick), hold);
        if ke < cfg.settle_energy {
            still += h;
            if still >= cfg.settle_hold - 1e-12 {
                settled = true;
                break;
            }
        } else {
            still = 0.0;
        }
    }
    let settle_time = settle_steps as f64 * h;
    let t_end = t_motion + settle_time;
    let final_state = sim.state();
    let trace = sampler.finish(t_end, final_state.endpoint());
    Ok(RolloutOutcome { state: final_state, trace, settle_time, settled, steps: sim.step })
}

/// Holds the gripper still at its current pose until the cable settles.
pub fn settle(
    state: &CableState,
    yaw: f64,
    params: &CableParams,
    cfg: &SimConfig,
    control_period: f64,
) -> Result<CableState, SimError> {
    let g = state.gripper();
    let traj = EndEffectorTrajectory::stationary(PlanePoint::new(g.x, g.y), yaw);
    Ok(rollout(state, &traj, params, cfg, control_period)?.state)
}
