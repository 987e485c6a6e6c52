use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use super::{ForwardModel, ModelError, TrainConfig, TrainingSet};
use crate::geometry::PlanePoint;

/// Fully connected layer, `y = W x + b` with `W` stored out × in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Rectified hidden layers and a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub widths: Vec<usize>,
    pub layers: Vec<Dense>,
}

/// Per-layer activations kept for the backward pass.
pub struct Tape {
    /// `acts[0]` is the input batch; `acts[k]` the output of layer `k-1`.
    acts: Vec<Array2<f64>>,
}

impl Mlp {
    /// He-normal weights, zero biases.
    pub fn new(widths: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let d = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).unwrap();
                Dense {
                    weights: Array2::from_shape_simple_fn((w[1], w[0]), || d.sample(&mut rng)),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Self { widths: widths.to_vec(), layers }
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Rows of `x` are samples.
    pub fn forward(&self, x: &Array2<f64>) -> Tape {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = acts[k].dot(&layer.weights.t());
            z += &layer.bias;
            if k + 1 < self.layers.len() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        Tape { acts }
    }

    pub fn predict(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward(x).acts.pop().unwrap()
    }

    /// Gradients of a loss with output gradient `d_out`, in layer order.
    pub fn backward(&self, tape: &Tape, d_out: Array2<f64>) -> Vec<Dense> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = d_out;
        for k in (0..self.layers.len()).rev() {
            let input = &tape.acts[k];
            let gw = delta.t().dot(input);
            let gb = delta.sum_axis(Axis(0));
            grads.push(Dense { weights: gw, bias: gb });
            if k > 0 {
                let mut d_in = delta.dot(&self.layers[k].weights);
                // ReLU mask from the activation that fed layer k
                ndarray::Zip::from(&mut d_in).and(input).for_each(|d, a| {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = d_in;
            }
        }
        grads.reverse();
        grads
    }

    /// Mean over samples of the squared L2 error, and its output gradient.
    pub fn mse(pred: &Array2<f64>, target: &Array2<f64>) -> (f64, Array2<f64>) {
        let n = pred.nrows() as f64;
        let diff = pred - target;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
        (loss, diff * (2.0 / n))
    }

    pub fn loss(&self, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
        Self::mse(&self.predict(x), y).0
    }

    /// Loss and parameter gradients on one batch.
    pub fn loss_and_grad(&self, x: &Array2<f64>, y: &Array2<f64>) -> (f64, Vec<Dense>) {
        let tape = self.forward(x);
        let (loss, d) = Self::mse(tape.acts.last().unwrap(), y);
        (loss, self.backward(&tape, d))
    }

    /// Flat view of parameter `i` (weights then bias, layer by layer).
    pub fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        for l in &mut self.layers {
            let nw = l.weights.len();
            if i < nw {
                return l.weights.as_slice_mut().unwrap().get_mut(i).unwrap();
            }
            i -= nw;
            if i < l.bias.len() {
                return &mut l.bias[i];
            }
            i -= l.bias.len();
        }
        panic!("parameter index out of range")
    }

    pub fn grad_at(grads: &[Dense], mut i: usize) -> f64 {
        for g in grads {
            let nw = g.weights.len();
            if i < nw {
                return g.weights.as_slice().unwrap()[i];
            }
            i -= nw;
            if i < g.bias.len() {
                return g.bias[i];
            }
            i -= g.bias.len();
        }
        panic!("parameter index out of range")
    }
}

/// First and second moment estimates for every parameter.
struct Adam {
    m: Vec<Dense>,
    v: Vec<Dense>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(net: &Mlp, lr: f64) -> Self {
        let zeros = || {
            net.layers
                .iter()
                .map(|l| Dense { weights: Array2::zeros(l.weights.raw_dim()), bias: Array1::zeros(l.bias.len()) })
                .collect()
        };
        Self { m: zeros(), v: zeros(), t: 0, lr }
    }

    fn step(&mut self, net: &mut Mlp, grads: &[Dense]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let lr = self.lr;
        for (((layer, g), m), v) in net.layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
                *m = Self::B1 * *m + (1.0 - Self::B1) * g;
                *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            };
            ndarray::Zip::from(&mut layer.weights).and(&g.weights).and(&mut m.weights).and(&mut v.weights).for_each(update);
            ndarray::Zip::from(&mut layer.bias).and(&g.bias).and(&mut m.bias).and(&mut v.bias).for_each(update);
        }
    }
}

/// The learned forward model with its normalisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpForward {
    pub net: Mlp,
    pub input_norm: Standardizer,
    pub output_norm: Standardizer,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

fn to_matrix(rows: &[Vec<f64>], norm: &Standardizer) -> Array2<f64> {
    let dim = norm.dim();
    let mut m = Array2::zeros((rows.len(), dim));
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in norm.apply(r).into_iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    m
}

fn select_rows(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    m.select(Axis(0), idx)
}

/// Mini-batch Adam over `epochs` passes. Returns the final full-data loss.
fn run_epochs(
    net: &mut Mlp,
    x: &Array2<f64>,
    y: &Array2<f64>,
    lr: f64,
    epochs: usize,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, ModelError> {
    let mut opt = Adam::new(net, lr);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    for epoch in 0..epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch.max(1)) {
            let (loss, grads) = net.loss_and_grad(&select_rows(x, chunk), &select_rows(y, chunk));
            if !loss.is_finite() {
                return Err(ModelError::Diverged { epoch });
            }
            epoch_loss += loss * chunk.len() as f64;
            opt.step(net, &grads);
        }
        log::debug!("epoch {epoch}: loss {:.6}", epoch_loss / x.nrows() as f64);
    }
    let loss = net.loss(x, y);
    if !loss.is_finite() {
        return Err(ModelError::Diverged { epoch: epochs });
    }
    Ok(loss)
}

impl MlpForward {
    pub fn train(data: &TrainingSet, cfg: &TrainConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        if data.len() < cfg.min_samples {
            return Err(ModelError::TooFewSamples { needed: cfg.min_samples, got: data.len() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.shuffle(&mut rng);
        let n_val = ((data.len() as f64) * cfg.val_fraction).round() as usize;
        let (val_idx, train_idx) = idx.split_at(n_val);
        let pick = |ids: &[usize], rows: &[Vec<f64>]| ids.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>();
        let (xt, yt) = (pick(train_idx, &data.inputs), pick(train_idx, &data.targets));
        let input_norm = Standardizer::fit(&xt);
        let output_norm = Standardizer::fit(&yt);
        let (x, y) = (to_matrix(&xt, &input_norm), to_matrix(&yt, &output_norm));

        let mut widths = vec![data.input_dim()];
        widths.extend(&cfg.hidden);
        widths.push(2);
        let mut net = Mlp::new(&widths, cfg.seed);
        let train_loss = run_epochs(&mut net, &x, &y, cfg.learning_rate, cfg.epochs, cfg.batch_size, &mut rng)?;
        let val_loss = (n_val > 0).then(|| {
            let xv = to_matrix(&pick(val_idx, &data.inputs), &input_norm);
            let yv = to_matrix(&pick(val_idx, &data.targets), &output_norm);
            net.loss(&xv, &yv)
        });
        Ok(Self { net, input_norm, output_norm, train_loss, val_loss })
    }

    /// Continues training on new data at the fine-tuning rate, keeping the
    /// normalisation fixed.
    pub fn finetune(&self, data: &TrainingSet, cfg: &TrainConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(ModelError::TooFewSamples { needed: 1, got: 0 });
        }
        if data.input_dim() != self.net.input_dim() {
            return Err(ModelError::DimensionMismatch { expected: self.net.input_dim(), got: data.input_dim() });
        }
        let mut out = self.clone();
        if cfg.finetune_epochs == 0 {
            return Ok(out);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xF1F1);
        let x = to_matrix(&data.inputs, &self.input_norm);
        let y = to_matrix(&data.targets, &self.output_norm);
        out.train_loss =
            run_epochs(&mut out.net, &x, &y, cfg.finetune_learning_rate, cfg.finetune_epochs, cfg.batch_size, &mut rng)?;
        out.val_loss = None;
        Ok(out)
    }

    /// Loss in normalised units on `data`.
    pub fn loss_on(&self, data: &TrainingSet) -> f64 {
        let x = to_matrix(&data.inputs, &self.input_norm);
        let y = to_matrix(&data.targets, &self.output_norm);
        self.net.loss(&x, &y)
    }
}

impl ForwardModel for MlpForward {
    fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn predict_features(&self, x: &[f64]) -> Result<PlanePoint, ModelError> {
        if x.len() != self.input_dim() {
            return Err(ModelError::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        let z = Array2::from_shape_vec((1, x.len()), self.input_norm.apply(x)).unwrap();
        let out = self.net.predict(&z);
        let y = self.output_norm.invert(&[out[[0, 0]], out[[0, 1]]]);
        Ok(PlanePoint::new(y[0], y[1]))
    }

    fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<PlanePoint>, ModelError> {
        if let Some(bad) = xs.iter().find(|x| x.len() != self.input_dim()) {
            return Err(ModelError::DimensionMismatch { expected: self.input_dim(), got: bad.len() });
        }
        let out = self.net.predict(&to_matrix(xs, &self.input_norm));
        Ok(out
            .rows()
            .into_iter()
            .map(|r| {
                let y = self.output_norm.invert(&[r[0], r[1]]);
                PlanePoint::new(y[0], y[1])
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.5..1.5))
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = Mlp::new(&[4, 256, 256, 256, 2], 1);
        let x = random_batch(&mut rng, 5, 4);
        let y = random_batch(&mut rng, 5, 2);
        let (_, grads) = net.loss_and_grad(&x, &y);
        let h = 1e-5;
        let total = net.parameter_count();
        let mut checked = 0;
        while checked < 10 {
            let i = rng.random_range(0..total);
            let analytic = Mlp::grad_at(&grads, i);
            let orig = *net.param_mut(i);
            *net.param_mut(i) = orig + h;
            let up = net.loss(&x, &y);
            *net.param_mut(i) = orig - h;
            let down = net.loss(&x, &y);
            *net.param_mut(i) = orig;
            let numeric = (up - down) / (2.0 * h);
            let scale = analytic.abs().max(numeric.abs());
            if scale < 1e-7 {
                // a ReLU-dead parameter: both sides vanish
                assert!(analytic.abs() < 1e-7 && numeric.abs() < 1e-7);
                continue;
            }
            assert!((analytic - numeric).abs() / scale < 1e-4, "param {i}: {analytic} vs {numeric}");
            checked += 1;
        }
    }

    #[test]
    fn zero_learning_rate_leaves_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_batch(&mut rng, 40, 3);
        let y = random_batch(&mut rng, 40, 2);
        let net0 = Mlp::new(&[3, 16, 2], 3);
        for seed in [1, 2] {
            let mut net = net0.clone();
            run_epochs(&mut net, &x, &y, 0.0, 1, 8, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(net, net0);
        }
    }
}
