//! Differentially private inference for trained feed-forward classifiers.
//!
//! A model is trained normally (optionally with the risk-averting
//! convexified cross-entropy), then each prediction is released through
//! output perturbation: one output neuron is chosen by the exponential
//! mechanism and its logit receives Laplace or Gaussian noise calibrated to
//! closed-form global-sensitivity bounds. A fixed budget is split across a
//! fixed number of queries. Shadow-model membership inference measures how
//! much the released vectors leak.
//!
//! | module | contents |
//! |---|---|
//! | [`nn`] | Tanh/Softmax network, losses, backprop, Adam training, checkpoints |
//! | [`sensitivity`] | Lipschitz bound and the sensitivity chain |
//! | [`mechanisms`] | samplers, exponential mechanism, budget split and ledger |
//! | [`predict`] | the private prediction procedure |
//! | [`attack`] | shadow-model membership inference |
//! | [`data`] | CSV datasets and synthetic generators |
//! | [`experiment`] | end-to-end runs and CSV reports |
//! | [`cli`] | the `dpinfer` command line |
//!
//! See the crate's `examples/` directory for one runnable program per capability.

pub mod attack;
pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod mechanisms;
pub mod nn;
pub mod predict;
pub mod rng;
pub mod sensitivity;

pub use error::{Error, Result};
