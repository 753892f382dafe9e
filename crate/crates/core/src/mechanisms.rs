//! Noise samplers, the exponential mechanism over output neurons, and
//! privacy-budget splitting, composition and accounting.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Laplace,
    Gaussian,
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Mechanism::Laplace => "laplace",
            Mechanism::Gaussian => "gaussian",
        })
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "laplace" | "lap" => Ok(Mechanism::Laplace),
            "gaussian" | "gaus" | "gauss" => Ok(Mechanism::Gaussian),
            other => Err(Error::Config(format!("unknown mechanism '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetSplit {
    pub sampling: f64,
    pub neuron: f64,
}

/// Splits one query's budget between neuron sampling and noise injection.
///
/// Laplace: both get `eps / (2C + 1)`. Gaussian: both get `eps / sqrt(4C + 1)`.
pub fn split_budget(epsilon: f64, classes: usize, mechanism: Mechanism) -> BudgetSplit {
    let c = classes as f64;
    let each = match mechanism {
        Mechanism::Laplace => epsilon / (2.0 * c + 1.0),
        Mechanism::Gaussian => epsilon / (4.0 * c + 1.0).sqrt(),
    };
    BudgetSplit {
        sampling: each,
        neuron: each,
    }
}

/// Fixed per-query share of a total budget: `eps / Q` under sequential
/// composition (Laplace), `eps / sqrt(Q)` under GDP composition (Gaussian).
pub fn per_query_budget(epsilon_total: f64, queries: usize, mechanism: Mechanism) -> f64 {
    let q = queries as f64;
    match mechanism {
        Mechanism::Laplace => epsilon_total / q,
        Mechanism::Gaussian => epsilon_total / q.sqrt(),
    }
}

/// `delta(eps) = Phi(-1 + eps/2) - e^eps Phi(-1 - eps/2)`, the
/// (eps, delta)-DP curve of 1-GDP.
pub fn delta_of_epsilon(epsilon: f64) -> f64 {
    let phi = Normal::standard();
    let v = phi.cdf(-1.0 + epsilon / 2.0) - epsilon.exp() * phi.cdf(-1.0 - epsilon / 2.0);
    v.max(0.0)
}

/// `sqrt(sum eps_i^2)`: n-fold composition of eps_i-GDP mechanisms.
pub fn gdp_compose(epsilons: &[f64]) -> Result<f64> {
    if epsilons.is_empty() {
        return Err(Error::Input("GDP composition of an empty list".into()));
    }
    if let Some(bad) = epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::Input(format!("GDP epsilon must be > 0, got {bad}")));
    }
    Ok(epsilons.iter().map(|e| e * e).sum::<f64>().sqrt())
}

/// Laplace(0, scale) by inverse CDF from one uniform draw.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        // u = -0.5 would give ln(0)
        if u > -0.5 {
            return -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln();
        }
    }
}

/// N(0, scale^2) by the Box-Muller transform (cosine branch).
pub fn sample_gaussian<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u1 = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    let u2: f64 = rng.random();
    scale * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn sample_noise<R: Rng + ?Sized>(mechanism: Mechanism, scale: f64, rng: &mut R) -> f64 {
    match mechanism {
        Mechanism::Laplace => sample_laplace(scale, rng),
        Mechanism::Gaussian => sample_gaussian(scale, rng),
    }
}

/// Which quantity divides the scores in the sampling exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingSensitivity {
    /// `exp(eps p_v / (2 dp))`, the normative prediction procedure.
    #[default]
    DeltaP,
    /// `exp(eps p_v / (2 e^dp))`, the variant appearing in the privacy proof.
    ExpDeltaP,
}

impl SamplingSensitivity {
    pub fn resolve(self, delta_p: f64) -> f64 {
        match self {
            SamplingSensitivity::DeltaP => delta_p,
            SamplingSensitivity::ExpDeltaP => delta_p.exp(),
        }
    }
}

/// Normalised selection probabilities `exp(eps s_v / 2 sens) / sum_j exp(eps s_j / 2 sens)`.
pub fn exp_mechanism_weights(scores: &[f64], sensitivity: f64, epsilon: f64) -> Result<Vec<f64>> {
    if !(sensitivity > 0.0 && sensitivity.is_finite()) {
        return Err(Error::Input(format!(
            "exponential-mechanism sensitivity must be > 0, got {sensitivity}"
        )));
    }
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::Input(format!("epsilon must be >= 0, got {epsilon}")));
    }
    if scores.is_empty() || scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("scores must be finite and non-empty".into()));
    }
    let exponents: Vec<f64> = scores
        .iter()
        .map(|s| epsilon * s / (2.0 * sensitivity))
        .collect();
    Ok(normalised_exp(&exponents))
}

fn normalised_exp(exponents: &[f64]) -> Vec<f64> {
    let max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = exponents.iter().map(|e| (e - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Draws an index from [`exp_mechanism_weights`] with one uniform draw.
pub fn exp_mechanism_sample<R: Rng + ?Sized>(
    scores: &[f64],
    sensitivity: f64,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    let weights = exp_mechanism_weights(scores, sensitivity, epsilon)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return Ok(i);
        }
    }
    // rounding left acc slightly below 1
    Ok(weights.iter().rposition(|&w| w > 0.0).unwrap_or(0))
}

/// Privacy budget pre-allocated over a fixed number of queries.
///
/// The ledger is shared: [`PrivacyBudget::charge`] is a single atomic
/// check-and-increment, so concurrent callers can never exceed
/// `queries_allowed`.
#[derive(Debug, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon_total: f64,
    pub mechanism: Mechanism,
    pub classes: usize,
    pub epsilon_per_query: f64,
    pub epsilon_sampling: f64,
    pub epsilon_neuron: f64,
    /// Reported delta for Gaussian runs (`1 / (10 |X|)`), when the training size is known.
    pub delta: Option<f64>,
    pub queries_allowed: usize,
    queries_answered: AtomicUsize,
}

impl Clone for PrivacyBudget {
    fn clone(&self) -> Self {
        PrivacyBudget {
            queries_answered: AtomicUsize::new(self.queries_answered()),
            ..*self
        }
    }
}

impl PrivacyBudget {
    pub fn new(epsilon_total: f64, queries_allowed: usize, classes: usize, mechanism: Mechanism) -> Result<Self> {
        if !(epsilon_total > 0.0 && epsilon_total.is_finite()) {
            return Err(Error::Input(format!("total epsilon must be > 0, got {epsilon_total}")));
        }
        if queries_allowed == 0 {
            return Err(Error::Input("budget must allow at least one query".into()));
        }
        if classes < 2 {
            return Err(Error::Input(format!("need C >= 2, got {classes}")));
        }
        let per_query = per_query_budget(epsilon_total, queries_allowed, mechanism);
        let split = split_budget(per_query, classes, mechanism);
        Ok(PrivacyBudget {
            epsilon_total,
            mechanism,
            classes,
            epsilon_per_query: per_query,
            epsilon_sampling: split.sampling,
            epsilon_neuron: split.neuron,
            delta: None,
            queries_allowed,
            queries_answered: AtomicUsize::new(0),
        })
    }

    /// Budget whose per-query share is exactly `epsilon_per_query`.
    pub fn from_per_query(epsilon_per_query: f64, queries_allowed: usize, classes: usize, mechanism: Mechanism) -> Result<Self> {
        let q = queries_allowed.max(1) as f64;
        let total = match mechanism {
            Mechanism::Laplace => epsilon_per_query * q,
            Mechanism::Gaussian => epsilon_per_query * q.sqrt(),
        };
        let mut budget = PrivacyBudget::new(total, queries_allowed, classes, mechanism)?;
        let split = split_budget(epsilon_per_query, classes, mechanism);
        budget.epsilon_per_query = epsilon_per_query;
        budget.epsilon_sampling = split.sampling;
        budget.epsilon_neuron = split.neuron;
        Ok(budget)
    }

    /// Records `delta = 1 / (10 n)` for Gaussian budgets.
    pub fn with_training_size(mut self, n: usize) -> Self {
        if self.mechanism == Mechanism::Gaussian && n > 0 {
            self.delta = Some(1.0 / (10.0 * n as f64));
        }
        self
    }

    pub fn queries_answered(&self) -> usize {
        self.queries_answered.load(Ordering::SeqCst)
    }

    pub fn queries_remaining(&self) -> usize {
        self.queries_allowed - self.queries_answered()
    }

    pub fn is_exhausted(&self) -> bool {
        self.queries_remaining() == 0
    }

    /// Budget not yet spent, under the mechanism's composition rule.
    pub fn remaining_epsilon(&self) -> f64 {
        let left = self.queries_remaining() as f64;
        match self.mechanism {
            Mechanism::Laplace => self.epsilon_per_query * left,
            Mechanism::Gaussian => self.epsilon_per_query * left.sqrt(),
        }
    }

    /// Reserves one query. Returns its 0-based ordinal, or a refusal once exhausted.
    pub fn charge(&self) -> Result<usize> {
        self.queries_answered
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |used| {
                (used < self.queries_allowed).then_some(used + 1)
            })
            .map_err(|used| Error::BudgetExhausted {
                answered: used,
                allowed: self.queries_allowed,
                remaining_epsilon: 0.0,
            })
    }

    /// (eps, delta)-DP conversion of the total budget read as GDP.
    pub fn gdp_delta_of_total(&self) -> f64 {
        delta_of_epsilon(self.epsilon_total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn split_examples() {
        assert!((split_budget(1.0, 2, Mechanism::Laplace).neuron - 0.2).abs() < 1e-15);
        assert_eq!(split_budget(21.0, 10, Mechanism::Laplace).sampling, 1.0);
        assert_eq!(split_budget(3.0, 2, Mechanism::Gaussian).neuron, 1.0);
    }

    #[test]
    fn per_query_examples() {
        assert!((per_query_budget(10.0, 1000, Mechanism::Laplace) - 0.01).abs() < 1e-15);
        assert_eq!(per_query_budget(5.0, 25, Mechanism::Gaussian), 1.0);
        assert_eq!(per_query_budget(3.5, 1, Mechanism::Laplace), 3.5);
        assert_eq!(per_query_budget(3.5, 1, Mechanism::Gaussian), 3.5);
    }

    #[test]
    fn gdp_composition() {
        assert_eq!(gdp_compose(&[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(gdp_compose(&[1.0]).unwrap(), 1.0);
        let v = gdp_compose(&[0.5; 16]).unwrap();
        assert!((v - 2.0).abs() < 1e-15);
        assert!(gdp_compose(&[]).is_err());
        assert!(gdp_compose(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn delta_at_zero_is_zero() {
        assert!(delta_of_epsilon(0.0).abs() < 1e-16);
    }

    #[test]
    fn exp_mechanism_rejects_nonpositive_sensitivity() {
        let mut s = rng::stream(0);
        assert!(exp_mechanism_sample(&[0.5, 0.5], 0.0, 1.0, &mut s).is_err());
        assert!(exp_mechanism_sample(&[0.5, 0.5], -1.0, 1.0, &mut s).is_err());
    }

    #[test]
    fn weights_are_shift_invariant() {
        // Adding a constant to every exponent leaves the normalised weights unchanged.
        // dyadic values keep every shift exact, so the identity must hold bit for bit
        let exps = [0.25, -1.5, 2.5, 0.0];
        let base = normalised_exp(&exps);
        for shift in [-512.0, -3.0, 8.0, 640.0] {
            let shifted: Vec<f64> = exps.iter().map(|e| e + shift).collect();
            assert_eq!(normalised_exp(&shifted), base);
        }
    }

    #[test]
    fn exp_delta_variant_uses_exponentiated_sensitivity() {
        assert_eq!(SamplingSensitivity::DeltaP.resolve(0.5), 0.5);
        assert_eq!(SamplingSensitivity::ExpDeltaP.resolve(0.5), 0.5f64.exp());
    }

    #[test]
    fn ledger_refuses_after_allowance() {
        let b = PrivacyBudget::new(1.0, 3, 2, Mechanism::Laplace).unwrap();
        for k in 0..3 {
            assert_eq!(b.charge().unwrap(), k);
        }
        assert!(matches!(
            b.charge(),
            Err(Error::BudgetExhausted { answered: 3, allowed: 3, .. })
        ));
        assert_eq!(b.queries_answered(), 3);
        assert!(b.is_exhausted());
    }

    #[test]
    fn ledger_is_atomic_under_contention() {
        let b = PrivacyBudget::new(1.0, 1000, 2, Mechanism::Gaussian).unwrap();
        let granted = std::sync::atomic::AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    for _ in 0..200 {
                        if b.charge().is_ok() {
                            granted.fetch_add(1, Ordering::SeqCst);
                        }
                    }
                });
            }
        });
        assert_eq!(granted.into_inner(), 1000);
        assert_eq!(b.queries_answered(), 1000);
    }

    #[test]
    fn gaussian_delta_from_training_size() {
        let b = PrivacyBudget::new(1.0, 1, 2, Mechanism::Gaussian)
            .unwrap()
            .with_training_size(600);
        assert_eq!(b.delta, Some(1.0 / 6000.0));
        let l = PrivacyBudget::new(1.0, 1, 2, Mechanism::Laplace)
            .unwrap()
            .with_training_size(600);
        assert_eq!(l.delta, None);
    }

    #[test]
    fn samplers_replay_from_stream_state() {
        let mut a = rng::stream(42);
        let mut b = rng::stream(42);
        for _ in 0..100 {
            assert_eq!(sample_laplace(2.0, &mut a).to_bits(), sample_laplace(2.0, &mut b).to_bits());
            assert_eq!(sample_gaussian(2.0, &mut a).to_bits(), sample_gaussian(2.0, &mut b).to_bits());
        }
    }

    proptest! {
        #[test]
        fn delta_monotone_on_grid(i in 0usize..400) {
            let e0 = i as f64 * 0.05;
            let e1 = e0 + 0.05;
            let (d0, d1) = (delta_of_epsilon(e0), delta_of_epsilon(e1));
            prop_assert!(d0 >= 0.0 && d1 <= 1.0);
            prop_assert!(d1 >= d0);
            // 1 - delta drops below f64 resolution near eps = 17
            if e1 <= 16.0 {
                prop_assert!(d1 < 1.0);
                prop_assert!(d1 > d0);
            }
        }

        #[test]
        fn weights_form_a_distribution(
            scores in proptest::collection::vec(0.0f64..1.0, 2..12),
            eps in 0.0f64..1e4,
            sens in 1e-3f64..1.0,
        ) {
            let w = exp_mechanism_weights(&scores, sens, eps).unwrap();
            let sum: f64 = w.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|x| x.is_finite() && *x >= 0.0));
        }
    }
}
