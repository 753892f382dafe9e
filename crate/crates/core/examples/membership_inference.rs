//! Shadow-model membership inference against a clean model and against its
//! private release.
//!
//! cargo run --release --example membership_inference

use dpinfer::attack::{build_shadow_corpus, evaluate_leakage, train_attack_model, AttackConfig};
use dpinfer::data::{make_synthetic, split_indices, SyntheticSpec};
use dpinfer::mechanisms::{Mechanism, PrivacyBudget};
use dpinfer::nn::{train, Checkpoint, NetworkTopology, TrainingConfig};
use dpinfer::predict::DpPredictor;
use dpinfer::{rng, sensitivity};

fn main() -> dpinfer::Result<()> {
    let mut data = make_synthetic(&SyntheticSpec::location_like(5))?;
    data.normalize();
    let parts = split_indices(data.len(), &[300, 300, 600], &mut rng::stream(6))?;
    let members = data.subset(&parts[0], "members");
    let non_members = data.subset(&parts[1], "non-members");
    let pool = data.subset(&parts[2], "shadow-pool");

    let config = TrainingConfig { epochs: 300, batch_size: 50, seed: 7, ..TrainingConfig::default() };
    let topology = NetworkTopology::new(data.feature_count(), vec![128], data.classes)?;
    let target = train(&members, Some(&non_members), &topology, &config)?;
    println!(
        "target: train {:.3}, test {:.3}",
        target.report.train_accuracy,
        target.report.test_accuracy.unwrap_or(f64::NAN)
    );

    let attack_config = AttackConfig::mirroring(vec![128], &config, 5, 300, 8);
    let corpus = build_shadow_corpus(&pool, &attack_config)?;
    let attack = train_attack_model(&corpus, &attack_config)?;
    println!("attack accuracy on its own shadow corpus: {:.3}", attack.accuracy(&corpus)?);

    let (m, n) = (members.examples(), non_members.examples());
    let clean = evaluate_leakage(|x| target.network.predict(x), &m, &n, &attack)?;
    println!("clean model:    leakage {:.3} (TPR {:.3}, FPR {:.3})", clean.result.privacy_leakage, clean.result.true_positive_rate, clean.result.false_positive_rate);

    let report = sensitivity::report(&Checkpoint::from_trained(&target), members.len(), config.l2_coefficient)?;
    for eps in [0.01, 1.0, 100.0] {
        let budget = PrivacyBudget::from_per_query(eps, m.len() + n.len(), data.classes, Mechanism::Gaussian)?;
        let predictor = DpPredictor::new(&target.network, &report, &budget)?;
        let mut stream = rng::stream(9);
        let dp = evaluate_leakage(|x| predictor.predict(x, &mut stream).map(|p| p.probabilities), &m, &n, &attack)?;
        println!("eps/query {eps:>6}: leakage {:.3}", dp.result.privacy_leakage);
    }
    Ok(())
}
