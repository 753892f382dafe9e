//! Differentially private prediction vectors by output perturbation.
//!
//! For one query the predictor runs the trained network up to the output
//! pre-activations, picks one output neuron with the exponential mechanism
//! (scores are the clean softmax probabilities), adds Laplace or Gaussian
//! noise of scale `delta_z / eps_neuron` to that neuron's logit only, and
//! releases the softmax of the perturbed logits. Each released vector
//! charges the shared budget exactly once.
//!
//! Clean logits, clean probabilities and the drawn noise never leave this
//! module unless the crate is built with the `diagnostics` feature.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::{exp_mechanism_sample, sample_noise, PrivacyBudget, SamplingSensitivity};
use crate::nn::{argmax, softmax, Network};
use crate::sensitivity::SensitivityReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpPrediction {
    pub probabilities: Vec<f64>,
    pub sampled_neuron: usize,
    pub epsilon_consumed: f64,
}

impl DpPrediction {
    /// Argmax of the released vector, lowest index on ties.
    pub fn predicted_class(&self) -> usize {
        argmax(&self.probabilities)
    }
}

/// Results of a batch, cut short if the budget ran out.
#[derive(Debug)]
pub struct BatchPrediction {
    pub results: Vec<DpPrediction>,
    /// The refusal that stopped the batch, if any.
    pub refusal: Option<Error>,
}

impl BatchPrediction {
    pub fn is_complete(&self) -> bool {
        self.refusal.is_none()
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Overrides {
    neuron: Option<usize>,
    noise: Option<f64>,
}

#[cfg_attr(not(feature = "diagnostics"), allow(dead_code))]
struct Internals {
    clean_logits: Vec<f64>,
    clean_probabilities: Vec<f64>,
    noise: f64,
}

/// Everything a query needs except the query itself.
#[derive(Debug, Clone, Copy)]
pub struct DpPredictor<'a> {
    network: &'a Network,
    report: &'a SensitivityReport,
    budget: &'a PrivacyBudget,
    sampling_sensitivity: SamplingSensitivity,
}

impl<'a> DpPredictor<'a> {
    pub fn new(network: &'a Network, report: &'a SensitivityReport, budget: &'a PrivacyBudget) -> Result<Self> {
        if report.is_degenerate() {
            return Err(Error::Input(
                "sensitivity report is degenerate (delta_z or delta_p is zero)".into(),
            ));
        }
        if !(report.delta_p > 0.0 && report.delta_p <= 1.0) {
            return Err(Error::Input(format!(
                "delta_p must lie in (0, 1], got {}",
                report.delta_p
            )));
        }
        if budget.classes != network.topology.classes {
            return Err(Error::Dimension {
                context: "budget classes",
                expected: network.topology.classes,
                actual: budget.classes,
            });
        }
        Ok(DpPredictor {
            network,
            report,
            budget,
            sampling_sensitivity: SamplingSensitivity::DeltaP,
        })
    }

    pub fn with_sampling_sensitivity(mut self, mode: SamplingSensitivity) -> Self {
        self.sampling_sensitivity = mode;
        self
    }

    /// Scale of the noise added to the sampled logit.
    pub fn noise_scale(&self) -> f64 {
        self.report.delta_z / self.budget.epsilon_neuron
    }

    pub fn budget(&self) -> &PrivacyBudget {
        self.budget
    }

    pub fn predict<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<DpPrediction> {
        self.run(x, rng, Overrides::default()).map(|(p, _)| p)
    }

    /// Sequential queries from one advancing stream; one budget charge each.
    pub fn predict_batch<R: Rng + ?Sized, X: AsRef<[f64]>>(&self, samples: &[X], rng: &mut R) -> Result<BatchPrediction> {
        let mut results = Vec::with_capacity(samples.len());
        for x in samples {
            match self.predict(x.as_ref(), rng) {
                Ok(p) => results.push(p),
                Err(e @ Error::BudgetExhausted { .. }) => {
                    return Ok(BatchPrediction {
                        results,
                        refusal: Some(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
        Ok(BatchPrediction {
            results,
            refusal: None,
        })
    }

    fn run<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R, overrides: Overrides) -> Result<(DpPrediction, Internals)> {
        let logits = self.network.logits(x)?;
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::Numeric("non-finite output logits".into()));
        }
        self.budget.charge().map_err(|e| match e {
            Error::BudgetExhausted { answered, allowed, .. } => Error::BudgetExhausted {
                answered,
                allowed,
                remaining_epsilon: self.budget.remaining_epsilon(),
            },
            other => other,
        })?;

        let clean = softmax(&logits);
        let sensitivity = self.sampling_sensitivity.resolve(self.report.delta_p);
        let v = match overrides.neuron {
            Some(v) => v,
            None => exp_mechanism_sample(&clean, sensitivity, self.budget.epsilon_sampling, rng)?,
        };
        let noise = match overrides.noise {
            Some(n) => n,
            None => sample_noise(self.budget.mechanism, self.noise_scale(), rng),
        };
        let mut perturbed = logits.clone();
        perturbed[v] += noise;
        let probabilities = softmax(&perturbed);
        Ok((
            DpPrediction {
                probabilities,
                sampled_neuron: v,
                epsilon_consumed: self.budget.epsilon_per_query,
            },
            Internals {
                clean_logits: logits,
                clean_probabilities: clean,
                noise,
            },
        ))
    }
}

/// Non-private inspection hooks. Everything here voids the guarantee.
#[cfg(feature = "diagnostics")]
pub mod diagnostics {
    use super::*;

    /// Forces parts of the procedure for debugging.
    #[derive(Debug, Default, Clone, Copy)]
    pub struct DiagnosticOverrides {
        /// Use this output neuron instead of sampling one.
        pub neuron: Option<usize>,
        /// Add exactly this value instead of drawing noise (0 disables perturbation).
        pub noise: Option<f64>,
    }

    #[derive(Debug, Clone, PartialEq)]
    pub struct DiagnosticTrace {
        pub clean_logits: Vec<f64>,
        pub clean_probabilities: Vec<f64>,
        pub noise: f64,
    }

    impl DpPredictor<'_> {
        pub fn predict_diagnostic<R: Rng + ?Sized>(
            &self,
            x: &[f64],
            rng: &mut R,
            overrides: DiagnosticOverrides,
        ) -> Result<(DpPrediction, DiagnosticTrace)> {
            if let Some(v) = overrides.neuron {
                if v >= self.network.topology.classes {
                    return Err(Error::Input(format!("forced neuron {v} out of range")));
                }
            }
            let (p, i) = self.run(
                x,
                rng,
                Overrides {
                    neuron: overrides.neuron,
                    noise: overrides.noise,
                },
            )?;
            Ok((
                p,
                DiagnosticTrace {
                    clean_logits: i.clean_logits,
                    clean_probabilities: i.clean_probabilities,
                    noise: i.noise,
                },
            ))
        }
    }
}
