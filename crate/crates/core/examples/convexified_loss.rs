//! The risk-averting loss on a fixed set of per-sample losses: it equals
//! the mean as alpha -> 0 and moves toward the worst sample as alpha grows.
//!
//! cargo run --example convexified_loss

use dpinfer::nn::{convexified_loss, mean_loss};

fn main() -> dpinfer::Result<()> {
    let losses = [0.05, 0.1, 0.2, 0.4, 2.5];
    println!("mean {:.6}, max {:.6}", mean_loss(&losses)?, 2.5);
    for alpha in [1e-4, 0.1, 1.0, 4.0, 10.0, 100.0] {
        println!("alpha {alpha:>7}: {:.6}", convexified_loss(&losses, alpha)?);
    }
    Ok(())
}
