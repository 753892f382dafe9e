//! Runs the 30-class synthetic experiment and prints the report.
//!
//! cargo run --release --example run_experiment -- [output_dir] [repetitions]

use dpinfer::experiment::{run_experiment, ExperimentConfig};

fn main() -> dpinfer::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "runs/location-like".into());
    let mut config = ExperimentConfig::location_like(out, 7);
    if let Some(r) = args.next() {
        config.repetitions = r.parse().map_err(|_| dpinfer::Error::Input(format!("bad repetition count '{r}'")))?;
    }
    let outcome = run_experiment(&config)?;
    print!("{}", outcome.report.to_csv());
    for s in &outcome.summaries {
        for e in &s.errors {
            eprintln!("repetition {}: {} failed: {}", s.repetition, e.stage, e.message);
        }
    }
    Ok(())
}
