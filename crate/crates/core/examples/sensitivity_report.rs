//! Sensitivity chain for two network shapes: a 14-feature binary task and
//! a 6169-feature 100-class task, both with 128 hidden units, trained on
//! 10000 rows with L2 coefficient 0.001.
//!
//! cargo run --example sensitivity_report

use dpinfer::nn::NetworkTopology;
use dpinfer::sensitivity::{lipschitz_bound, SensitivityReport};

fn main() -> dpinfer::Result<()> {
    for (name, inputs, classes, rho) in [("binary, 14 features", 14, 2, 0.1654), ("100 classes, 6169 features", 6169, 100, 6.8729)] {
        let topology = NetworkTopology::new(inputs, vec![128], classes)?;
        let report = SensitivityReport::for_topology(&topology, rho, 10_000, 0.001)?;
        println!("# {name} ({} weights)", topology.total_weights());
        print!("{}", report.to_key_value());
        println!();
    }

    // rho from per-layer activation maxima: inputs in [-1, 1], Tanh hidden layer
    let topology = NetworkTopology::new(14, vec![128], 2)?;
    let rho = lipschitz_bound(&topology, &[1.0, 1.0])?;
    println!("# rho for unit activation maxima: {rho:.4}");
    Ok(())
}
