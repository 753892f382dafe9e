//! Trains a small model, then answers queries with private prediction
//! vectors at several budgets and reports how often the top class survives.
//!
//! cargo run --release --example dp_prediction

use dpinfer::data::{make_synthetic, split_indices, SyntheticSpec};
use dpinfer::mechanisms::{Mechanism, PrivacyBudget};
use dpinfer::nn::{argmax, train, Checkpoint, NetworkTopology, TrainingConfig};
use dpinfer::predict::DpPredictor;
use dpinfer::{rng, sensitivity};

fn main() -> dpinfer::Result<()> {
    let spec = SyntheticSpec {
        classes: 5,
        rows: 1000,
        features: 10,
        separation: 1.0,
        seed: 1,
    };
    let mut data = make_synthetic(&spec)?;
    data.normalize();
    let parts = split_indices(data.len(), &[500, 500], &mut rng::stream(2))?;
    let (train_set, queries) = (data.subset(&parts[0], "train"), data.subset(&parts[1], "queries"));
    let topology = NetworkTopology::new(10, vec![64], 5)?;
    let config = TrainingConfig { seed: 3, ..TrainingConfig::default() };
    let model = train(&train_set, Some(&queries), &topology, &config)?;
    let report = sensitivity::report(&Checkpoint::from_trained(&model), train_set.len(), config.l2_coefficient)?;
    println!("clean test accuracy {:.3}; delta_z {:.4}, delta_p {:.4}", model.report.test_accuracy.unwrap_or(0.0), report.delta_z, report.delta_p);

    for mechanism in [Mechanism::Laplace, Mechanism::Gaussian] {
        for eps in [0.1, 1.0, 10.0, 100.0] {
            let budget = PrivacyBudget::from_per_query(eps, queries.len(), 5, mechanism)?;
            let predictor = DpPredictor::new(&model.network, &report, &budget)?;
            let batch = predictor.predict_batch(&queries.features, &mut rng::stream(4))?;
            let mut agree = 0;
            let mut correct = 0;
            for (r, (x, &y)) in batch.results.iter().zip(queries.features.iter().zip(&queries.labels)) {
                agree += usize::from(r.predicted_class() == argmax(&model.network.predict(x)?));
                correct += usize::from(r.predicted_class() == y);
            }
            let n = batch.results.len() as f64;
            println!(
                "{mechanism:>8} eps/query {eps:>6}: noise scale {:>9.3}, top class kept {:.3}, accuracy {:.3}",
                predictor.noise_scale(),
                agree as f64 / n,
                correct as f64 / n
            );
        }
    }
    Ok(())
}
