mod common;

use common::{blobs, random_inputs};
use dpinfer::nn::{train, Checkpoint, NetworkTopology, TrainingConfig};
use dpinfer::sensitivity;

#[test]
fn trained_model_reloads_bit_exactly() {
    let ds = blobs(3, 150, 4, 2.0, 1);
    let topo = NetworkTopology::new(4, vec![10], 3).unwrap();
    let cfg = TrainingConfig {
        epochs: 20,
        batch_size: 30,
        seed: 2,
        ..TrainingConfig::default()
    };
    let model = train(&ds, None, &topo, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    Checkpoint::from_trained(&model).save(&path).unwrap();

    let loaded = Checkpoint::load(&path).unwrap();
    let net = loaded.network().unwrap();
    assert_eq!(net.params.weights, model.network.params.weights);
    for x in random_inputs(20, 4, 3) {
        assert_eq!(net.predict(&x).unwrap(), model.network.predict(&x).unwrap());
    }
    let meta = loaded.training.as_ref().unwrap();
    assert_eq!(meta.config, cfg);
    assert_eq!(meta.report, model.report);

    let a = sensitivity::report(&loaded, ds.len(), cfg.l2_coefficient).unwrap();
    let b = sensitivity::report(&Checkpoint::from_trained(&model), ds.len(), cfg.l2_coefficient).unwrap();
    assert_eq!(a, b);
}

#[test]
fn untrained_checkpoint_has_no_sensitivity() {
    let net = common::random_network(2, &[3], 2, 1.0, 0);
    let ckpt = Checkpoint::from_network(&net);
    assert!(sensitivity::report(&ckpt, 10, 0.001).is_err());
}
