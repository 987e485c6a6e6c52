//! Free-end cable dragged over a plane by a kinematic gripper.
//!
//! The cable is a chain of point nodes joined by inextensible segments.
//! Each step integrates gravity, planar bending springs and damping
//! explicitly, applies Coulomb friction to nodes resting on the plane, then
//! restores the segment lengths with a few Newton projections.

mod engine;
mod noise;
mod params;
mod trace;
mod vec3;

use thiserror::Error;

pub use engine::{
    endpoint_polar, reset_state, rollout, rollout_observed, settle, straight_state, substeps, CableState, Phase,
    RolloutOutcome, StepInfo,
};
pub use noise::{perturb_action, perturb_state, NoiseSpec};
pub use params::{CableParams, ParamId, ParamMask, ResetLayout, SimConfig};
pub use trace::{TrajectoryTrace, TRACE_SPACING_MS};
pub use vec3::Vec3;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid cable parameters: {0}")]
    InvalidParams(String),
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error("invalid cable state: {0}")]
    InvalidState(String),
    #[error("no room for the reset cable: {0}")]
    NoRoom(String),
    #[error("numerical blow-up at step {step}: node {node} moving at {speed:.3e} m/s")]
    BlowUp { step: usize, node: usize, speed: f64 },
    #[error("trace format: {0}")]
    TraceFormat(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
