#![allow(dead_code)]

use dpinfer::data::{make_synthetic, LabeledDataset, SyntheticSpec};
use dpinfer::experiment::{DatasetSource, ExperimentConfig};
use dpinfer::mechanisms::Mechanism;
use dpinfer::nn::{ModelParams, Network, NetworkTopology, TrainingConfig};
use dpinfer::rng;
use rand::Rng;
use std::path::Path;

/// Network with weights uniform in `[-scale, scale]`.
pub fn random_network(inputs: usize, hidden: &[usize], classes: usize, scale: f64, seed: u64) -> Network {
    let topo = NetworkTopology::new(inputs, hidden.to_vec(), classes).unwrap();
    let mut s = rng::stream(seed);
    let weights = (0..topo.total_weights())
        .map(|_| s.random_range(-scale..=scale))
        .collect();
    Network::new(topo, ModelParams { weights }).unwrap()
}

pub fn random_inputs(count: usize, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut s = rng::stream(seed);
    (0..count)
        .map(|_| (0..m).map(|_| s.random_range(-1.0..=1.0)).collect())
        .collect()
}

pub fn blobs(classes: usize, rows: usize, features: usize, separation: f64, seed: u64) -> LabeledDataset {
    let mut ds = make_synthetic(&SyntheticSpec {
        classes,
        rows,
        features,
        separation,
        seed,
    })
    .unwrap();
    ds.normalize();
    ds
}

/// A seconds-scale experiment: 10 classes, 100 training rows.
pub fn small_experiment(out: &Path, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::location_like(out, seed);
    cfg.name = "small".into();
    cfg.dataset = DatasetSource::Synthetic(SyntheticSpec {
        classes: 10,
        rows: 400,
        features: 20,
        separation: 0.5,
        seed,
    });
    cfg.hidden = vec![32];
    cfg.training = TrainingConfig {
        epochs: 300,
        batch_size: 25,
        ..TrainingConfig::default()
    };
    cfg.train_size = Some(100);
    cfg.attack.shadow_count = 3;
    cfg.attack.training.epochs = 40;
    cfg.epsilons = vec![0.01, 100.0];
    cfg.mechanisms = vec![Mechanism::Gaussian];
    cfg.repetitions = 1;
    cfg
}

/// Sample mean and (population) variance.
pub fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}
