use serde::{Deserialize, Serialize};

use super::noise::NoiseSpec;
use super::SimError;

/// Tunable physics parameters.
///
/// How the engine consumes them:
///
/// | parameter | effect |
/// |---|---|
/// | `mass_per_segment` | mass of every free node |
/// | `endpoint_mass_scale` | multiplier on the last node's mass |
/// | `bend_stiffness` | angular spring between consecutive segments and at the grip |
/// | `lateral_friction`, `worksurface_friction` | Coulomb coefficient `μ = √(lateral · worksurface)` |
/// | `linear_damping` | velocity damping, 1/s |
/// | `angular_damping` | damping of the bending rate, scaled by `m·l²` |
/// | `twist_stiffness`, `spinning_friction`, `rolling_friction` | unused (point nodes carry no spin) |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CableParams {
    pub twist_stiffness: f64,
    /// N·m/rad per joint.
    pub bend_stiffness: f64,
    /// kg.
    pub mass_per_segment: f64,
    pub lateral_friction: f64,
    pub spinning_friction: f64,
    pub rolling_friction: f64,
    pub endpoint_mass_scale: f64,
    pub linear_damping: f64,
    pub angular_damping: f64,
    pub worksurface_friction: f64,
}

impl Default for CableParams {
    fn default() -> Self {
        Self {
            twist_stiffness: 0.0,
            bend_stiffness: 0.02,
            mass_per_segment: 0.005,
            lateral_friction: 0.5,
            spinning_friction: 0.001,
            rolling_friction: 0.001,
            endpoint_mass_scale: 1.0,
            linear_damping: 0.04,
            angular_damping: 0.1,
            worksurface_friction: 0.5,
        }
    }
}

/// Index into the 10-dimensional parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamId {
    TwistStiffness,
    BendStiffness,
    MassPerSegment,
    LateralFriction,
    SpinningFriction,
    RollingFriction,
    EndpointMassScale,
    LinearDamping,
    AngularDamping,
    WorksurfaceFriction,
}

impl ParamId {
    pub const ALL: [ParamId; 10] = [
        ParamId::TwistStiffness,
        ParamId::BendStiffness,
        ParamId::MassPerSegment,
        ParamId::LateralFriction,
        ParamId::SpinningFriction,
        ParamId::RollingFriction,
        ParamId::EndpointMassScale,
        ParamId::LinearDamping,
        ParamId::AngularDamping,
        ParamId::WorksurfaceFriction,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamId::TwistStiffness => "twist_stiffness",
            ParamId::BendStiffness => "bend_stiffness",
            ParamId::MassPerSegment => "mass_per_segment",
            ParamId::LateralFriction => "lateral_friction",
            ParamId::SpinningFriction => "spinning_friction",
            ParamId::RollingFriction => "rolling_friction",
            ParamId::EndpointMassScale => "endpoint_mass_scale",
            ParamId::LinearDamping => "linear_damping",
            ParamId::AngularDamping => "angular_damping",
            ParamId::WorksurfaceFriction => "worksurface_friction",
        }
    }
}

/// Which of the ten parameters take part in something (the engine, or a
/// search).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamMask(pub [bool; 10]);

impl ParamMask {
    /// Parameters the engine actually reads.
    pub const ENGINE_ACTIVE: ParamMask =
        ParamMask([false, true, true, true, false, false, true, true, true, true]);

    pub fn only(ids: &[ParamId]) -> Self {
        let mut m = [false; 10];
        for id in ids {
            m[id.index()] = true;
        }
        ParamMask(m)
    }

    pub fn contains(&self, id: ParamId) -> bool {
        self.0[id.index()]
    }

    pub fn ids(&self) -> Vec<ParamId> {
        ParamId::ALL.iter().copied().filter(|id| self.contains(*id)).collect()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }
}

impl CableParams {
    /// Ground-truth cable that plays the part of the physical cable: a light
    /// rope with a weighted end on a low-friction surface. Deliberately far
    /// from [`CableParams::default`], which is what tuning starts from.
    pub fn reference_cable() -> Self {
        Self {
            bend_stiffness: 0.03,
            mass_per_segment: 0.004,
            lateral_friction: 0.1,
            endpoint_mass_scale: 5.0,
            linear_damping: 0.2,
            angular_damping: 0.3,
            worksurface_friction: 0.6,
            ..Self::default()
        }
    }

    pub fn active_mask(&self) -> ParamMask {
        ParamMask::ENGINE_ACTIVE
    }

    pub fn get(&self, id: ParamId) -> f64 {
        self.to_array()[id.index()]
    }

    pub fn set(&mut self, id: ParamId, value: f64) {
        let mut a = self.to_array();
        a[id.index()] = value;
        *self = Self::from_array(a);
    }

    pub fn to_array(&self) -> [f64; 10] {
        [
            self.twist_stiffness,
            self.bend_stiffness,
            self.mass_per_segment,
            self.lateral_friction,
            self.spinning_friction,
            self.rolling_friction,
            self.endpoint_mass_scale,
            self.linear_damping,
            self.angular_damping,
            self.worksurface_friction,
        ]
    }

    pub fn from_array(a: [f64; 10]) -> Self {
        Self {
            twist_stiffness: a[0],
            bend_stiffness: a[1],
            mass_per_segment: a[2],
            lateral_friction: a[3],
            spinning_friction: a[4],
            rolling_friction: a[5],
            endpoint_mass_scale: a[6],
            linear_damping: a[7],
            angular_damping: a[8],
            worksurface_friction: a[9],
        }
    }

    /// Combined Coulomb coefficient between cable and worksurface.
    pub fn effective_friction(&self) -> f64 {
        (self.lateral_friction * self.worksurface_friction).sqrt()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for id in ParamId::ALL {
            let v = self.get(id);
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::InvalidParams(format!("{} must be ≥ 0, got {v}", id.name())));
            }
        }
        if !(self.mass_per_segment > 0.0) {
            return Err(SimError::InvalidParams("mass_per_segment must be positive".into()));
        }
        if !(self.endpoint_mass_scale >= 1.0) {
            return Err(SimError::InvalidParams("endpoint_mass_scale must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Which way the cable lies from the gripper at reset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResetLayout {
    /// Away from the base, as left by casting forward and dragging back.
    #[default]
    Forward,
    /// Toward the base, behind the gripper.
    Trailing,
}

impl ResetLayout {
    /// +1 when the cable leaves the gripper along the tool yaw direction,
    /// −1 when it leaves opposite to it.
    pub fn sign(self) -> f64 {
        match self {
            ResetLayout::Forward => 1.0,
            ResetLayout::Trailing => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_segments: usize,
    /// Cable length, meters.
    pub rest_length_total: f64,
    /// Largest physics step, seconds. Steps are shortened so that every
    /// control tick lands on a step boundary.
    pub dt: f64,
    /// Magnitude of gravity along −z, m/s².
    pub gravity: f64,
    pub seed: u64,
    pub noise: Option<NoiseSpec>,
    /// Kinetic energy below which the cable counts as still, joules.
    pub settle_energy: f64,
    /// How long the cable must stay still, seconds.
    pub settle_hold: f64,
    /// Longest settle phase after the gripper stops, seconds.
    pub settle_timeout: f64,
    /// Node speed that aborts a rollout, m/s.
    pub blowup_speed: f64,
    pub projection_iterations: usize,
    pub reset_layout: ResetLayout,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_segments: 20,
            rest_length_total: 0.62,
            dt: 1.0 / 480.0,
            gravity: 9.81,
            seed: 0,
            noise: None,
            settle_energy: 1e-5,
            settle_hold: 0.25,
            settle_timeout: 5.0,
            blowup_speed: 50.0,
            projection_iterations: 4,
            reset_layout: ResetLayout::Forward,
        }
    }
}

impl SimConfig {
    pub fn segment_length(&self) -> f64 {
        self.rest_length_total / self.n_segments as f64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_segments < 2 {
            return Err(SimError::InvalidConfig("n_segments must be ≥ 2".into()));
        }
        if !(self.dt > 0.0) || !(self.rest_length_total > 0.0) {
            return Err(SimError::InvalidConfig("dt and rest_length_total must be positive".into()));
        }
        if self.projection_iterations == 0 {
            return Err(SimError::InvalidConfig("projection_iterations must be ≥ 1".into()));
        }
        Ok(())
    }
}
