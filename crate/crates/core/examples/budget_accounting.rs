//! How a total budget is divided over queries and between neuron
//! selection and noise, and what the ledger does when it runs out.
//!
//! cargo run --example budget_accounting

use dpinfer::mechanisms::{delta_of_epsilon, gdp_compose, Mechanism, PrivacyBudget};

fn main() -> dpinfer::Result<()> {
    let classes = 10;
    for mechanism in [Mechanism::Laplace, Mechanism::Gaussian] {
        let budget = PrivacyBudget::new(1.0, 100, classes, mechanism)?.with_training_size(10_000);
        println!(
            "{mechanism:>8}: per query {:.5}, sampling {:.6}, neuron {:.6}, delta {:?}",
            budget.epsilon_per_query, budget.epsilon_sampling, budget.epsilon_neuron, budget.delta
        );
    }

    let per_query = [0.1; 100];
    let total = gdp_compose(&per_query)?;
    println!("100 Gaussian queries at 0.1 compose to {total:.3}; delta({total:.3}) = {:.3e}", delta_of_epsilon(total));

    let budget = PrivacyBudget::new(1.0, 3, classes, Mechanism::Laplace)?;
    for i in 1..=4 {
        match budget.charge() {
            Ok(n) => println!("query {i}: answered (slot {n} of {})", budget.queries_allowed),
            Err(e) => println!("query {i}: {e}"),
        }
    }
    Ok(())
}
