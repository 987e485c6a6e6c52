use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::engine::CableState;
use crate::trajgen::Action;

/// Zero-mean Gaussian perturbation magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Std of the in-plane offset added to each free node, meters.
    pub sigma_pos: f64,
    /// Std added to every action variable (radians or meters).
    pub sigma_act: f64,
}

impl NoiseSpec {
    pub fn new(sigma_pos: f64, sigma_act: f64) -> Self {
        Self { sigma_pos, sigma_act }
    }

    pub fn scaled(self, k: f64) -> Self {
        Self { sigma_pos: self.sigma_pos * k, sigma_act: self.sigma_act * k }
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_pos == 0.0 && self.sigma_act == 0.0
    }
}

fn gaussian(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma.abs()).expect("finite sigma")
}

/// Adds `σ_act` noise to each action variable.
pub fn perturb_action(action: &Action, noise: &NoiseSpec, seed: u64) -> Action {
    if noise.sigma_act == 0.0 {
        return action.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = gaussian(noise.sigma_act);
    let mut out = action.clone();
    out.theta1 += d.sample(&mut rng);
    out.theta2 += d.sample(&mut rng);
    out.r2 = (out.r2 + d.sample(&mut rng)).max(0.0);
    if let Some(psi) = out.psi.as_mut() {
        *psi += d.sample(&mut rng);
    }
    out
}

/// Jitters the free nodes in the plane, then restores every segment length
/// while keeping each node's height.
pub fn perturb_state(state: &CableState, noise: &NoiseSpec, seed: u64, segment_length: f64) -> CableState {
    if noise.sigma_pos == 0.0 {
        return state.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = gaussian(noise.sigma_pos);
    let mut out = state.clone();
    for node in out.nodes.iter_mut().skip(1) {
        node.x += d.sample(&mut rng);
        node.y += d.sample(&mut rng);
    }
    for i in 1..out.nodes.len() {
        let prev = out.nodes[i - 1];
        let node = &mut out.nodes[i];
        let dz = node.z - prev.z;
        let horizontal = (segment_length * segment_length - dz * dz).max(0.0).sqrt();
        let (dx, dy) = (node.x - prev.x, node.y - prev.y);
        let len = dx.hypot(dy);
        let (ux, uy) = if len > 1e-12 { (dx / len, dy / len) } else { (0.0, -1.0) };
        node.x = prev.x + ux * horizontal;
        node.y = prev.y + uy * horizontal;
    }
    out
}
