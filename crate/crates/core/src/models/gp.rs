use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use super::{ForwardModel, ModelError, TrainingSet};
use crate::geometry::PlanePoint;

/// Squared-exponential kernel with per-dimension length scales, unit signal
/// variance and additive observation noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub length_scales: Vec<f64>,
    /// Noise variance.
    pub noise: f64,
}

impl GpHyper {
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((x, y), l) in a.iter().zip(b).zip(&self.length_scales) {
            let d = (x - y) / l;
            s += d * d;
        }
        (-0.5 * s).exp()
    }
}

/// Exact GP regression with zero prior mean and any number of outputs
/// sharing one kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianProcess {
    pub hyper: GpHyper,
    pub inputs: Vec<Vec<f64>>,
    /// `K⁻¹ y`, one column per output.
    pub alpha: Vec<Vec<f64>>,
    /// Jitter that made the kernel matrix factorisable.
    pub jitter: f64,
    /// Summed log marginal likelihood over outputs.
    pub log_marginal_likelihood: f64,
}

const JITTERS: [f64; 7] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5];
const MAX_JITTER: f64 = 1e-4;

fn factor(x: &[Vec<f64>], hyper: &GpHyper) -> Result<(Cholesky<f64, Dyn>, f64), ModelError> {
    let n = x.len();
    let mut k = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = hyper.kernel(&x[i], &x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += hyper.noise;
    }
    for jitter in JITTERS.iter().copied().chain(std::iter::once(MAX_JITTER)) {
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok((c, jitter));
        }
    }
    Err(ModelError::Singular)
}

impl GaussianProcess {
    /// `outputs[k]` holds the k-th target for every input.
    pub fn fit(inputs: Vec<Vec<f64>>, outputs: &[Vec<f64>], hyper: GpHyper) -> Result<Self, ModelError> {
        let n = inputs.len();
        if n == 0 {
            return Err(ModelError::TooFewSamples { needed: 1, got: 0 });
        }
        let (chol, jitter) = factor(&inputs, &hyper)?;
        let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let mut alpha = Vec::with_capacity(outputs.len());
        let mut lml = 0.0;
        for y in outputs {
            let yv = DVector::from_column_slice(y);
            let a = chol.solve(&yv);
            lml += -0.5 * yv.dot(&a) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            alpha.push(a.as_slice().to_vec());
        }
        Ok(Self { hyper, inputs, alpha, jitter, log_marginal_likelihood: lml })
    }

    /// Posterior mean of every output at `x`.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let k: Vec<f64> = self.inputs.iter().map(|xi| self.hyper.kernel(x, xi)).collect();
        self.alpha.iter().map(|a| a.iter().zip(&k).map(|(a, k)| a * k).sum()).collect()
    }
}

/// Hyperparameter search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    /// Largest exact fit; larger datasets are subsampled.
    pub max_points: usize,
    /// Subset size used while searching hyperparameters.
    pub search_points: usize,
    /// Shared length scales tried first (normalised input units).
    pub length_grid: Vec<f64>,
    pub noise_grid: Vec<f64>,
    pub seed: u64,
    pub min_samples: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            max_points: 2000,
            search_points: 600,
            length_grid: vec![0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.5],
            noise_grid: vec![1e-6, 1e-4, 1e-3, 1e-2, 1e-1],
            seed: 0,
            min_samples: 50,
        }
    }
}

/// GP forward model on standardised inputs and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpForward {
    pub gp: GaussianProcess,
    pub input_norm: Standardizer,
    pub output_norm: Standardizer,
}

fn lml(x: &[Vec<f64>], ys: &[Vec<f64>], hyper: &GpHyper) -> f64 {
    GaussianProcess::fit(x.to_vec(), ys, hyper.clone()).map_or(f64::NEG_INFINITY, |g| g.log_marginal_likelihood)
}

impl GpForward {
    /// Grid search on a subset (shared length scale × noise, then one pass
    /// halving or doubling each length scale), then an exact fit.
    pub fn train(data: &TrainingSet, cfg: &GpConfig) -> Result<Self, ModelError> {
        if data.len() < cfg.min_samples {
            return Err(ModelError::TooFewSamples { needed: cfg.min_samples, got: data.len() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(cfg.max_points);
        idx.sort_unstable();
        let rows = |ids: &[usize], src: &[Vec<f64>]| ids.iter().map(|&i| src[i].clone()).collect::<Vec<_>>();
        let xs = rows(&idx, &data.inputs);
        let ys = rows(&idx, &data.targets);
        let input_norm = Standardizer::fit(&xs);
        let output_norm = Standardizer::fit(&ys);
        let zx: Vec<Vec<f64>> = xs.iter().map(|x| input_norm.apply(x)).collect();
        let zy: Vec<Vec<f64>> = ys.iter().map(|y| output_norm.apply(y)).collect();
        let columns = |rows: &[Vec<f64>]| (0..2).map(|k| rows.iter().map(|r| r[k]).collect()).collect::<Vec<Vec<f64>>>();

        let m = cfg.search_points.min(zx.len());
        let sx = &zx[..m];
        let sy = columns(&zy[..m]);
        let dim = data.input_dim();
        let mut best = GpHyper { length_scales: vec![1.0; dim], noise: 1e-2 };
        let mut best_lml = f64::NEG_INFINITY;
        for &l in &cfg.length_grid {
            for &noise in &cfg.noise_grid {
                let h = GpHyper { length_scales: vec![l; dim], noise };
                let v = lml(sx, &sy, &h);
                if v > best_lml {
                    best_lml = v;
                    best = h;
                }
            }
        }
        for d in 0..dim {
            for factor in [0.5, 2.0] {
                let mut h = best.clone();
                h.length_scales[d] *= factor;
                let v = lml(sx, &sy, &h);
                if v > best_lml {
                    best_lml = v;
                    best = h;
                }
            }
        }
        if !best_lml.is_finite() {
            return Err(ModelError::Singular);
        }
        log::info!("gp hyperparameters {best:?} (lml {best_lml:.3} on {m} points)");
        let gp = GaussianProcess::fit(zx, &columns(&zy), best)?;
        Ok(Self { gp, input_norm, output_norm })
    }
}

impl ForwardModel for GpForward {
    fn input_dim(&self) -> usize {
        self.input_norm.dim()
    }

    fn predict_features(&self, x: &[f64]) -> Result<PlanePoint, ModelError> {
        if x.len() != self.input_dim() {
            return Err(ModelError::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        let y = self.output_norm.invert(&self.gp.predict(&self.input_norm.apply(x)));
        Ok(PlanePoint::new(y[0], y[1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_posterior() {
        let h = GpHyper { length_scales: vec![0.5, 0.5], noise: 1e-8 };
        let gp = GaussianProcess::fit(vec![vec![0.2, -0.1]], &[vec![1.5], vec![-0.7]], h).unwrap();
        let at = gp.predict(&[0.2, -0.1]);
        assert!((at[0] - 1.5).abs() < 1e-6 && (at[1] + 0.7).abs() < 1e-6);
        let near = gp.predict(&[0.21, -0.1]);
        assert!((near[0] - 1.5).abs() < 0.01);
        let far = gp.predict(&[20.0, 20.0]);
        assert!(far[0].abs() < 1e-12 && far[1].abs() < 1e-12);
    }

    #[test]
    fn interpolates_training_points_as_noise_vanishes() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.3, (i as f64 * 0.7).sin()]).collect();
        let y: Vec<f64> = xs.iter().map(|x| x[0].cos() + 0.5 * x[1]).collect();
        let h = GpHyper { length_scales: vec![0.6, 0.6], noise: 1e-8 };
        let gp = GaussianProcess::fit(xs.clone(), std::slice::from_ref(&y), h).unwrap();
        for (x, t) in xs.iter().zip(&y) {
            assert!((gp.predict(x)[0] - t).abs() < 1e-5);
        }
    }

    #[test]
    fn duplicate_inputs_need_jitter() {
        let xs = vec![vec![0.0], vec![0.0], vec![0.0]];
        let h = GpHyper { length_scales: vec![1.0], noise: 0.0 };
        let gp = GaussianProcess::fit(xs, &[vec![1.0, 1.0, 1.0]], h).unwrap();
        assert!(gp.jitter > 0.0);
    }
}
