//! Trains the same network with the plain and the convexified loss on a
//! synthetic 30-class set and saves both checkpoints.
//!
//! cargo run --release --example train_classifier -- [out_dir]

use std::path::PathBuf;

use dpinfer::data::{make_synthetic, split_indices, SyntheticSpec};
use dpinfer::nn::{train, Checkpoint, LossKind, NetworkTopology, TrainingConfig};
use dpinfer::rng;

fn main() -> dpinfer::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&out).map_err(|e| dpinfer::Error::Input(e.to_string()))?;

    let mut data = make_synthetic(&SyntheticSpec::location_like(1))?;
    data.normalize();
    let parts = split_indices(data.len(), &[300, 300], &mut rng::stream(2))?;
    let train_set = data.subset(&parts[0], "train");
    let test_set = data.subset(&parts[1], "test");
    let topology = NetworkTopology::new(data.feature_count(), vec![128], data.classes)?;

    for (loss, name) in [(LossKind::CrossEntropy, "plain"), (LossKind::ConvexifiedCrossEntropy, "convexified")] {
        let config = TrainingConfig {
            loss,
            epochs: 300,
            batch_size: 50,
            seed: 3,
            ..TrainingConfig::default()
        };
        let model = train(&train_set, Some(&test_set), &topology, &config)?;
        let path = out.join(format!("model-{name}.json"));
        Checkpoint::from_trained(&model).save(&path)?;
        println!(
            "{name:>12}: train {:.3}  test {:.3}  final loss {:.4}  -> {}",
            model.report.train_accuracy,
            model.report.test_accuracy.unwrap_or(f64::NAN),
            model.report.final_loss,
            path.display()
        );
    }
    Ok(())
}
