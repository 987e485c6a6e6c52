//! Planar coordinates and the two scalar motion profiles used to build
//! gripper trajectories: a zero-slope cubic ease and a jerk-limited
//! rest-to-rest S-curve.
//!
//! Angles are measured from the +y axis (straight ahead of the robot base),
//! positive toward +x. Under this convention a left/right reflection of the
//! workspace is a sign flip on the angle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default control period of the arm, seconds.
pub const DEFAULT_CONTROL_PERIOD: f64 = 0.008;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("profile duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("motion limits must be positive (v_max={v_max}, a_max={a_max}, j_max={j_max})")]
    InvalidLimits { v_max: f64, a_max: f64, j_max: f64 },
    #[error("sampling period must be positive, got {0}")]
    InvalidPeriod(f64),
}

/// A point in polar form around some origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint {
    pub r: f64,
    pub theta: f64,
}

impl PolarPoint {
    pub fn new(r: f64, theta: f64) -> Self {
        Self { r, theta }
    }

    /// Reflection across the axis of symmetry.
    pub fn mirrored(self) -> Self {
        Self { r: self.r, theta: -self.theta }
    }

    pub fn is_valid(&self) -> bool {
        self.r.is_finite()
            && self.theta.is_finite()
            && self.r >= 0.0
            && self.theta.abs() <= std::f64::consts::PI
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    pub x: f64,
    pub y: f64,
}

impl PlanePoint {
    pub const ORIGIN: PlanePoint = PlanePoint { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &PlanePoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Reflection across the y axis.
    pub fn mirrored(self) -> Self {
        Self { x: -self.x, y: self.y }
    }

    pub fn offset(self, dx: f64, dy: f64) -> Self {
        Self { x: self.x + dx, y: self.y + dy }
    }
}

/// `(r, θ) ↦ (r·sin θ, r·cos θ)`.
pub fn polar_to_cartesian(p: PolarPoint) -> PlanePoint {
    let (s, c) = p.theta.sin_cos();
    PlanePoint { x: p.r * s, y: p.r * c }
}

/// Inverse of [`polar_to_cartesian`]; the origin maps to `(0, 0)`.
pub fn cartesian_to_polar(p: PlanePoint) -> PolarPoint {
    let r = p.norm();
    if r == 0.0 {
        return PolarPoint { r: 0.0, theta: 0.0 };
    }
    PolarPoint { r, theta: p.x.atan2(p.y) }
}

/// One sample of a scalar profile: time, value and its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub t: f64,
    pub value: f64,
    pub rate: f64,
    pub accel: f64,
}

/// A scalar profile sampled at a fixed period. The last step may be shorter
/// so that the final sample lands exactly on `duration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarProfile {
    pub duration: f64,
    pub samples: Vec<ProfileSample>,
}

impl ScalarProfile {
    pub fn final_value(&self) -> f64 {
        self.samples.last().map(|s| s.value).unwrap_or(0.0)
    }
}

/// Sample times `0, h, 2h, …` plus `duration` itself when it is not a
/// multiple of `h`.
pub fn sample_times(duration: f64, period: f64) -> Vec<f64> {
    if duration <= 0.0 {
        return vec![0.0];
    }
    let steps = (duration / period + 1e-9).floor() as usize;
    let mut times: Vec<f64> = (0..=steps).map(|k| k as f64 * period).collect();
    let last = *times.last().unwrap();
    if duration - last > 1e-9 * period.max(1.0) {
        times.push(duration);
    } else {
        *times.last_mut().unwrap() = duration;
    }
    times
}

/// Anything that can be evaluated at an arbitrary time.
pub trait Profile {
    fn duration(&self) -> f64;

    /// `(value, rate, accel)` at time `t`, clamped to `[0, duration]`.
    fn eval(&self, t: f64) -> (f64, f64, f64);

    fn sample(&self, period: f64) -> Result<ScalarProfile, GeometryError> {
        if !(period > 0.0) {
            return Err(GeometryError::InvalidPeriod(period));
        }
        let samples = sample_times(self.duration(), period)
            .into_iter()
            .map(|t| {
                let (value, rate, accel) = self.eval(t);
                ProfileSample { t, value, rate, accel }
            })
            .collect();
        Ok(ScalarProfile { duration: self.duration(), samples })
    }
}

/// Hermite cubic with zero slope at both ends:
/// `v(s) = start + (end − start)(3s² − 2s³)`, `s = t / duration`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicEase {
    start: f64,
    end: f64,
    duration: f64,
}

impl CubicEase {
    pub fn new(start: f64, end: f64, duration: f64) -> Result<Self, GeometryError> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(GeometryError::NonPositiveDuration(duration));
        }
        Ok(Self { start, end, duration })
    }

    /// Largest |dv/dt|, reached at the midpoint.
    pub fn peak_rate(&self) -> f64 {
        1.5 * (self.end - self.start).abs() / self.duration
    }
}

impl Profile for CubicEase {
    fn duration(&self) -> f64 {
        self.duration
    }

    fn eval(&self, t: f64) -> (f64, f64, f64) {
        if t <= 0.0 {
            return (self.start, 0.0, 0.0);
        }
        if t >= self.duration {
            return (self.end, 0.0, 0.0);
        }
        let delta = self.end - self.start;
        let s = t / self.duration;
        let value = self.start + delta * s * s * (3.0 - 2.0 * s);
        let rate = delta * 6.0 * s * (1.0 - s) / self.duration;
        let accel = delta * (6.0 - 12.0 * s) / (self.duration * self.duration);
        (value, rate, accel)
    }
}

/// Sampled [`CubicEase`] at the default control period.
pub fn cubic_ease(start: f64, end: f64, duration: f64) -> Result<ScalarProfile, GeometryError> {
    CubicEase::new(start, end, duration)?.sample(DEFAULT_CONTROL_PERIOD)
}

/// Kinematic limits for an S-curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionLimits {
    pub v_max: f64,
    pub a_max: f64,
    pub j_max: f64,
}

impl MotionLimits {
    pub fn new(v_max: f64, a_max: f64, j_max: f64) -> Result<Self, GeometryError> {
        let ok = |x: f64| x > 0.0 && x.is_finite();
        if !(ok(v_max) && ok(a_max) && ok(j_max)) {
            return Err(GeometryError::InvalidLimits { v_max, a_max, j_max });
        }
        Ok(Self { v_max, a_max, j_max })
    }
}

/// A stretch of constant jerk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JerkPhase {
    pub duration: f64,
    /// Signed jerk in the direction of travel.
    pub jerk: f64,
}

#[derive(Debug, Clone, Copy)]
struct Knot {
    t: f64,
    pos: f64,
    vel: f64,
    acc: f64,
}

/// Minimum-time rest-to-rest jerk-limited profile ("double S"): jerk takes
/// values in `{+j, 0, −j}`, acceleration is capped at `a_max` and speed at
/// `v_max`. Zero displacement yields a zero-duration profile.
#[derive(Debug, Clone)]
pub struct SCurve {
    start: f64,
    end: f64,
    sign: f64,
    peak_rate: f64,
    phases: Vec<JerkPhase>,
    knots: Vec<Knot>,
    duration: f64,
}

impl SCurve {
    pub fn plan(start: f64, end: f64, limits: MotionLimits) -> Self {
        let MotionLimits { v_max, a_max: a, j_max: j } = limits;
        let distance = (end - start).abs();
        let sign = if end >= start { 1.0 } else { -1.0 };
        if distance == 0.0 {
            return Self {
                start,
                end,
                sign,
                peak_rate: 0.0,
                phases: Vec::new(),
                knots: Vec::new(),
                duration: 0.0,
            };
        }

        // Distance covered by a symmetric accelerate/decelerate pair that
        // peaks at speed v is v·Ta(v); invert it for the reachable speed.
        let reachable = if distance <= 2.0 * a * a * a / (j * j) {
            (distance * j.sqrt() / 2.0).powf(2.0 / 3.0)
        } else {
            0.5 * a * (-a / j + (a * a / (j * j) + 4.0 * distance / a).sqrt())
        };
        let peak = v_max.min(reachable);

        let (ramp, hold) = if peak * j >= a * a {
            (a / j, peak / a - a / j)
        } else {
            ((peak / j).sqrt(), 0.0)
        };
        let accel_time = 2.0 * ramp + hold;
        let cruise = ((distance - peak * accel_time) / peak).max(0.0);

        let raw = [
            (ramp, j),
            (hold, 0.0),
            (ramp, -j),
            (cruise, 0.0),
            (ramp, -j),
            (hold, 0.0),
            (ramp, j),
        ];
        let phases: Vec<JerkPhase> = raw
            .iter()
            .filter(|(d, _)| *d > 0.0)
            .map(|&(duration, jerk)| JerkPhase { duration, jerk })
            .collect();

        let mut knots = Vec::with_capacity(phases.len() + 1);
        let mut k = Knot { t: 0.0, pos: 0.0, vel: 0.0, acc: 0.0 };
        for phase in &phases {
            knots.push(k);
            k = advance(k, phase.jerk, phase.duration);
        }
        let duration = k.t;
        knots.push(k);

        Self { start, end, sign, peak_rate: peak, phases, knots, duration }
    }

    pub fn phases(&self) -> &[JerkPhase] {
        &self.phases
    }

    /// Cruise speed actually reached (≤ v_max).
    pub fn peak_rate(&self) -> f64 {
        self.peak_rate
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    /// Jerk at time `t` (signed).
    pub fn jerk_at(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= self.duration {
            return 0.0;
        }
        let idx = self.phase_index(t);
        self.sign * self.phases[idx].jerk
    }

    fn phase_index(&self, t: f64) -> usize {
        // knots[i].t is the start of phase i
        let n = self.phases.len();
        match self.knots[..n].binary_search_by(|k| k.t.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
    }
}

fn advance(k: Knot, jerk: f64, tau: f64) -> Knot {
    Knot {
        t: k.t + tau,
        pos: k.pos + k.vel * tau + 0.5 * k.acc * tau * tau + jerk * tau * tau * tau / 6.0,
        vel: k.vel + k.acc * tau + 0.5 * jerk * tau * tau,
        acc: k.acc + jerk * tau,
    }
}

impl Profile for SCurve {
    fn duration(&self) -> f64 {
        self.duration
    }

    fn eval(&self, t: f64) -> (f64, f64, f64) {
        if t <= 0.0 || self.phases.is_empty() {
            return (self.start, 0.0, 0.0);
        }
        if t >= self.duration {
            return (self.end, 0.0, 0.0);
        }
        let idx = self.phase_index(t);
        let k = advance(self.knots[idx], self.phases[idx].jerk, t - self.knots[idx].t);
        (
            self.start + self.sign * k.pos,
            self.sign * k.vel,
            self.sign * k.acc,
        )
    }
}

/// Sampled [`SCurve`] at the default control period.
pub fn max_velocity_profile(
    start: f64,
    end: f64,
    v_max: f64,
    a_max: f64,
    j_max: f64,
) -> Result<ScalarProfile, GeometryError> {
    let limits = MotionLimits::new(v_max, a_max, j_max)?;
    SCurve::plan(start, end, limits).sample(DEFAULT_CONTROL_PERIOD)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const LIMITS: MotionLimits = MotionLimits { v_max: 1.5, a_max: 4.0, j_max: 40.0 };

    #[test]
    fn polar_examples() {
        let p = polar_to_cartesian(PolarPoint::new(1.0, 0.0));
        assert_eq!((p.x, p.y), (0.0, 1.0));
        let p = polar_to_cartesian(PolarPoint::new(0.0, 1.3));
        assert_eq!((p.x, p.y), (0.0, 0.0));
        let p = polar_to_cartesian(PolarPoint::new(2.0, PI / 6.0));
        assert!((p.x - 1.0).abs() < 1e-12);
        assert!((p.y - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cartesian_to_polar_examples() {
        let p = cartesian_to_polar(PlanePoint::new(0.0, 1.0));
        assert_eq!((p.r, p.theta), (1.0, 0.0));
        let p = cartesian_to_polar(PlanePoint::ORIGIN);
        assert_eq!((p.r, p.theta), (0.0, 0.0));
        let p = cartesian_to_polar(PlanePoint::new(1.0, 1.0));
        assert!((p.r - 2f64.sqrt()).abs() < 1e-12);
        assert!((p.theta - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn cubic_boundaries() {
        let ease = CubicEase::new(0.6, 1.0, 2.0).unwrap();
        assert_eq!(ease.eval(2.0).0, 1.0);
        assert!((ease.eval(1.0).0 - 0.8).abs() < 1e-15);
        let ease = CubicEase::new(0.6, 2.0, 1.5).unwrap();
        // evaluate the interior formula right at the ends
        let d = 1.4;
        let rate = |s: f64| d * 6.0 * s * (1.0 - s) / 1.5;
        assert!(rate(0.0).abs() < 1e-9 && rate(1.0).abs() < 1e-9);
        assert!(ease.eval(1e-12).1.abs() < 1e-9);
        assert!(ease.eval(1.5 - 1e-12).1.abs() < 1e-9);
        let sampled = cubic_ease(0.6, 2.0, 1.5).unwrap();
        assert_eq!(sampled.samples[0].rate, 0.0);
        assert_eq!(sampled.samples.last().unwrap().rate, 0.0);
        assert_eq!(sampled.final_value(), 2.0);
    }

    #[test]
    fn cubic_rejects_bad_duration() {
        assert!(matches!(cubic_ease(0.0, 1.0, 0.0), Err(GeometryError::NonPositiveDuration(_))));
        assert!(cubic_ease(0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn null_displacement_is_degenerate() {
        let p = max_velocity_profile(0.5, 0.5, 1.5, 4.0, 40.0).unwrap();
        assert_eq!(p.duration, 0.0);
        assert_eq!(p.samples.len(), 1);
        assert_eq!(p.samples[0].value, 0.5);
    }

    #[test]
    fn invalid_limits_rejected() {
        assert!(max_velocity_profile(0.0, 1.0, 0.0, 4.0, 40.0).is_err());
        assert!(max_velocity_profile(0.0, 1.0, 1.0, -4.0, 40.0).is_err());
    }

    /// Integrate the jerk schedule with a fine fixed step, independently of
    /// the closed-form knots. Only `jerk_at` is consulted; a step whose two
    /// ends see different jerk is split at the switch, located by bisection.
    fn integrate_jerk(curve: &SCurve, h: f64) -> (f64, f64, f64) {
        fn advance(s: &mut (f64, f64, f64), j: f64, dt: f64) {
            let (p, v, a) = *s;
            *s = (p + v * dt + 0.5 * a * dt * dt + j * dt.powi(3) / 6.0, v + a * dt + 0.5 * j * dt * dt, a + j * dt);
        }
        let mut s = (curve.start(), 0.0, 0.0);
        let total = curve.duration();
        let n = (total / h).ceil() as usize;
        let step = total / n as f64;
        for i in 0..n {
            let (mut t0, t1) = (i as f64 * step, (i + 1) as f64 * step);
            let eps = step * 1e-7;
            while curve.jerk_at(t0 + eps) != curve.jerk_at(t1 - eps) {
                let j = curve.jerk_at(t0 + eps);
                let (mut lo, mut hi) = (t0 + eps, t1 - eps);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if curve.jerk_at(mid) == j {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                advance(&mut s, j, lo - t0);
                t0 = lo;
            }
            advance(&mut s, curve.jerk_at(0.5 * (t0 + t1)), t1 - t0);
        }
        s
    }

    #[test]
    fn jerk_schedule_reaches_target() {
        let generous = MotionLimits { v_max: 1.5, a_max: 50.0, j_max: 500.0 };
        for limits in [generous, LIMITS] {
            let curve = SCurve::plan(0.0, 1.0, limits);
            let (p, v, a) = integrate_jerk(&curve, 2e-6);
            assert!((p - 1.0).abs() < 1e-6, "final position {p}");
            assert!(v.abs() < 1e-6, "final velocity {v}");
            assert!(a.abs() < 1e-6, "final accel {a}");
        }
    }

    #[test]
    fn short_move_never_reaches_cruise() {
        let curve = SCurve::plan(0.0, 0.01, LIMITS);
        assert!(curve.peak_rate() < LIMITS.v_max);
        let (p, _, _) = integrate_jerk(&curve, 1e-6);
        assert!((p - 0.01).abs() < 1e-9);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        // Truncation error of a central difference is bounded by h²·|x'''|/6
        // (plus a jump term where the jerk switches sign).
        let curve = SCurve::plan(0.0, 2.0, LIMITS);
        let h = 1e-5;
        let bound = h * LIMITS.j_max * 2.0 + 1e-6;
        for k in 1..200 {
            let t = curve.duration() * k as f64 / 200.0;
            let fd = (curve.eval(t + h).0 - curve.eval(t - h).0) / (2.0 * h);
            assert!((fd - curve.eval(t).1).abs() < bound);
            let fd2 = (curve.eval(t + h).1 - curve.eval(t - h).1) / (2.0 * h);
            assert!((fd2 - curve.eval(t).2).abs() < bound);
        }
    }

    proptest! {
        #[test]
        fn polar_mirror_and_norm(r in 0.0f64..5.0, theta in -PI..PI) {
            let a = polar_to_cartesian(PolarPoint::new(r, theta));
            let b = polar_to_cartesian(PolarPoint::new(r, -theta));
            prop_assert_eq!(b.x, -a.x);
            prop_assert_eq!(b.y, a.y);
            prop_assert!((a.norm() - r).abs() < 1e-12);
        }

        #[test]
        fn cubic_stays_in_range(start in -3.0f64..3.0, end in -3.0f64..3.0, dur in 0.01f64..5.0) {
            let p = CubicEase::new(start, end, dur).unwrap().sample(dur / 97.0).unwrap();
            let (lo, hi) = (start.min(end), start.max(end));
            for s in &p.samples {
                prop_assert!(s.value >= lo - 1e-12 && s.value <= hi + 1e-12);
            }
        }

        #[test]
        fn scurve_respects_limits(
            start in -3.0f64..3.0,
            end in -3.0f64..3.0,
            v in 0.2f64..3.0,
            a in 0.5f64..10.0,
            j in 1.0f64..100.0,
        ) {
            let limits = MotionLimits::new(v, a, j).unwrap();
            let curve = SCurve::plan(start, end, limits);
            let profile = curve.sample(DEFAULT_CONTROL_PERIOD).unwrap();
            let (lo, hi) = (start.min(end), start.max(end));
            let mut prev = start;
            for s in &profile.samples {
                prop_assert!(s.rate.abs() <= v + 1e-9);
                prop_assert!(s.accel.abs() <= a + 1e-9);
                prop_assert!(curve.jerk_at(s.t).abs() <= j + 1e-9);
                prop_assert!(s.value >= lo - 1e-12 && s.value <= hi + 1e-12);
                // monotone toward the end
                prop_assert!((s.value - prev) * (end - start) >= -1e-12);
                prev = s.value;
            }
            prop_assert_eq!(profile.final_value(), end);
        }

        #[test]
        fn scurve_time_reversal(start in -3.0f64..3.0, end in -3.0f64..3.0) {
            let fwd = SCurve::plan(start, end, LIMITS);
            let back = SCurve::plan(end, start, LIMITS);
            prop_assert!((fwd.duration() - back.duration()).abs() < 1e-12);
            let total = fwd.duration();
            for s in fwd.sample(DEFAULT_CONTROL_PERIOD).unwrap().samples {
                let (v, _, _) = back.eval(total - s.t);
                prop_assert!((v - s.value).abs() < 1e-9);
            }
        }

        #[test]
        fn scurve_duration_monotone(d in 1e-3f64..4.0) {
            let one = SCurve::plan(0.0, d, LIMITS).duration();
            let two = SCurve::plan(0.0, 2.0 * d, LIMITS).duration();
            prop_assert!(two >= one);
        }
    }
}
