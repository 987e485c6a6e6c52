use std::sync::OnceLock;

use dyncable::cablesim::{CableParams, NoiseSpec, SimConfig};
use dyncable::datasets::{Dataset, DatasetKind, Generator};
use dyncable::models::{
    ForwardModel, GpConfig, GpForward, ModelError, MlpForward, SavedModel, TrainConfig, TrainingSet,
};
use dyncable::stats::median;
use dyncable::trajgen::{grid_of_size, ActionBounds, ActionSet, SystemParams, WorkspaceLimits};

struct Fixture {
    train: TrainingSet,
    holdout: TrainingSet,
    mlp: MlpForward,
    gp: GpForward,
}

const CABLE: f64 = 0.62;

fn sim_data(params: &CableParams, n: usize, noise: Option<NoiseSpec>, seed: u64) -> Dataset {
    let (cfg, sys, ws) = (SimConfig::default(), SystemParams::default(), WorkspaceLimits::default());
    let actions = grid_of_size(ActionSet::A2, &ActionBounds::default(), n, &sys, &ws).unwrap();
    Generator { params, cfg: &cfg, sys: &sys, noise }.generate(DatasetKind::Sim, &actions, seed).unwrap()
}

/// Desk-scale D_sim (2,000 grid actions) split 90/10.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let d = sim_data(&CableParams::reference_cable(), 2000, None, 1);
        let (train, holdout) = d.split(0.9, 5).unwrap();
        let train = TrainingSet::from_dataset(&train);
        let holdout = TrainingSet::from_dataset(&holdout);
        let mlp = MlpForward::train(&train, &TrainConfig::default()).unwrap();
        let gp = GpForward::train(&train, &GpConfig::default()).unwrap();
        Fixture { train, holdout, mlp, gp }
    })
}

fn median_error(model: &dyn ForwardModel, data: &TrainingSet) -> f64 {
    let errors: Vec<f64> = data
        .inputs
        .iter()
        .zip(&data.targets)
        .map(|(x, y)| {
            let p = model.predict_features(x).unwrap();
            ((p.x - y[0]).powi(2) + (p.y - y[1]).powi(2)).sqrt()
        })
        .collect();
    median(&errors)
}

#[test]
fn mlp_holdout_error_on_desk_scale_sim_data() {
    let f = fixture();
    assert_eq!(f.train.len() + f.holdout.len(), 2000);
    let e = median_error(&f.mlp, &f.holdout);
    println!("mlp held-out median {:.4} m ({:.2}%)", e, 100.0 * e / CABLE);
    assert!(e <= 0.05 * CABLE);
}

#[test]
fn gp_holdout_error_within_factor_of_mlp() {
    let f = fixture();
    let (m, g) = (median_error(&f.mlp, &f.holdout), median_error(&f.gp, &f.holdout));
    println!("gp held-out median {:.4} m vs mlp {:.4} m", g, m);
    assert!(g <= 2.0 * m);
}

#[test]
fn constant_targets_are_learned() {
    let inputs: Vec<Vec<f64>> = (0..120).map(|i| vec![-(i as f64) * 0.01, 0.3 + 0.005 * i as f64, 0.5]).collect();
    let targets = vec![vec![0.25, 0.9]; inputs.len()];
    let data = TrainingSet { inputs, targets };
    let cfg = TrainConfig { val_fraction: 0.2, epochs: 2000, ..TrainConfig::default() };
    let m = MlpForward::train(&data, &cfg).unwrap();
    let rmse = (data.inputs.iter().map(|x| {
        let p = m.predict_features(x).unwrap();
        (p.x - 0.25).powi(2) + (p.y - 0.9).powi(2)
    }).sum::<f64>() / data.len() as f64)
        .sqrt();
    assert!(rmse < 1e-3, "rmse {rmse}");
}

#[test]
fn too_few_samples_rejected() {
    let data = TrainingSet { inputs: vec![vec![0.0, 0.1, 0.2]; 10], targets: vec![vec![0.0, 1.0]; 10] };
    assert!(matches!(MlpForward::train(&data, &TrainConfig::default()), Err(ModelError::TooFewSamples { .. })));
    assert!(matches!(GpForward::train(&data, &GpConfig::default()), Err(ModelError::TooFewSamples { .. })));
}

#[test]
fn serialization_round_trip_preserves_predictions() {
    let f = fixture();
    for model in [SavedModel::Mlp(f.mlp.clone()), SavedModel::Gp(f.gp.clone())] {
        let back = SavedModel::from_json(&model.to_json(Some("abc")).unwrap()).unwrap();
        for x in f.holdout.inputs.iter().take(50) {
            let (a, b) = (model.as_forward().predict_features(x).unwrap(), back.as_forward().predict_features(x).unwrap());
            assert!(a.distance(&b) <= 1e-12);
        }
    }
}

#[test]
fn prediction_is_deterministic_and_checks_dimension() {
    let f = fixture();
    let x = &f.holdout.inputs[0];
    assert_eq!(f.mlp.predict_features(x).unwrap(), f.mlp.predict_features(x).unwrap());
    assert_eq!(f.gp.predict_features(x).unwrap(), f.gp.predict_features(x).unwrap());
    assert!(matches!(f.mlp.predict_features(&x[..3]), Err(ModelError::DimensionMismatch { .. })));
    assert!(matches!(f.gp.predict_features(&x[..3]), Err(ModelError::DimensionMismatch { .. })));
}

#[test]
fn gp_reproduces_training_targets_within_noise() {
    let inputs: Vec<Vec<f64>> = (0..80)
        .map(|i| {
            let t = i as f64;
            vec![-1.0 + 0.02 * t, 0.2 + (0.37 * t).sin().abs(), 0.3 + 0.6 * (0.11 * t).cos().abs()]
        })
        .collect();
    let targets: Vec<Vec<f64>> = inputs.iter().map(|x| vec![x[0].sin() * x[2], 0.5 + x[1] * x[1] - 0.2 * x[0]]).collect();
    let data = TrainingSet { inputs, targets };
    let gp = GpForward::train(&data, &GpConfig::default()).unwrap();
    let sd = gp.output_norm.std.iter().cloned().fold(0.0, f64::max);
    let sigma = gp.gp.hyper.noise.sqrt() * sd;
    for (x, y) in data.inputs.iter().zip(&data.targets) {
        let p = gp.predict_features(x).unwrap();
        assert!((p.x - y[0]).abs() <= 2.0 * sigma && (p.y - y[1]).abs() <= 2.0 * sigma, "noise sd {sigma}");
    }
}

#[test]
fn finetune_with_zero_epochs_keeps_weights() {
    let f = fixture();
    let cfg = TrainConfig { finetune_epochs: 0, ..TrainConfig::default() };
    let tuned = f.mlp.finetune(&f.holdout, &cfg).unwrap();
    assert_eq!(tuned.net, f.mlp.net);
    assert_eq!(tuned.input_norm, f.mlp.input_norm);
}

#[test]
fn finetune_on_shifted_data_reduces_its_loss() {
    let f = fixture();
    let shifted = TrainingSet {
        inputs: f.holdout.inputs.clone(),
        targets: f.holdout.targets.iter().map(|y| vec![y[0] + 0.05, y[1] - 0.03]).collect(),
    };
    let cfg = TrainConfig { finetune_epochs: 50, ..TrainConfig::default() };
    let tuned = f.mlp.finetune(&shifted, &cfg).unwrap();
    assert!(tuned.loss_on(&shifted) < f.mlp.loss_on(&shifted));
    assert_eq!(tuned.output_norm, f.mlp.output_norm);
}

/// Pre-train on data from the default (untuned) cable, fine-tune on the
/// noisy stand-in for physical data from the reference cable, and measure
/// on held-out stand-in rows.
#[test]
fn finetuning_on_real_stand_in_lowers_real_error() {
    let sim = TrainingSet::from_dataset(&sim_data(&CableParams::default(), 2000, None, 2));
    let real = sim_data(&CableParams::reference_cable(), 250, Some(NoiseSpec::new(0.005, 0.01)), 3);
    let (real_train, real_test) = real.split(0.8, 4).unwrap();
    let (real_train, real_test) = (TrainingSet::from_dataset(&real_train), TrainingSet::from_dataset(&real_test));
    let cfg = TrainConfig::default();
    let pre = MlpForward::train(&sim, &cfg).unwrap();
    let tuned = pre.finetune(&real_train, &cfg).unwrap();
    let (before, after) = (median_error(&pre, &real_test), median_error(&tuned, &real_test));
    println!("held-out real median {:.4} m -> {:.4} m after fine-tuning", before, after);
    assert!(after < before);
}
