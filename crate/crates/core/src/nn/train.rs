use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{convexified_weights, is_clamped};
use super::{convexified_loss, cross_entropy, mean_loss, softmax, ModelParams, Network, NetworkTopology};
use crate::data::{Example, LabeledDataset};
use crate::error::{Error, Result};
use crate::rng;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    CrossEntropy,
    ConvexifiedCrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Coefficient `c` of the `c * ||W||^2` regularizer.
    pub l2_coefficient: f64,
    /// Risk factor of the convexified loss.
    pub alpha: f64,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.001,
            batch_size: 100,
            epochs: 100,
            l2_coefficient: 0.001,
            alpha: 1.0,
            loss: LossKind::ConvexifiedCrossEntropy,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    /// Hyper-parameters of the per-class membership-inference attack models.
    pub fn attack_model() -> Self {
        TrainingConfig {
            learning_rate: 0.01,
            l2_coefficient: 1e-6,
            loss: LossKind::CrossEntropy,
            ..TrainingConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.l2_coefficient >= 0.0 && self.l2_coefficient.is_finite()) {
            return Err(Error::Config(format!(
                "l2_coefficient must be >= 0, got {}",
                self.l2_coefficient
            )));
        }
        if self.loss == LossKind::ConvexifiedCrossEntropy
            && !(self.alpha > 0.0 && self.alpha.is_finite())
        {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Strong-convexity constant implied by the regularizer: `lambda = c / 2`.
    pub fn strong_convexity(&self) -> f64 {
        self.l2_coefficient / 2.0
    }
}

impl Network {
    /// Selected loss plus `l2_coefficient * ||W||^2`. An empty batch leaves the regularizer alone.
    pub fn objective(&self, batch: &[Example<'_>], config: &TrainingConfig) -> Result<f64> {
        let reg = config.l2_coefficient * self.params.squared_norm();
        if batch.is_empty() {
            return Ok(reg);
        }
        let losses = self.sample_losses(batch)?;
        let data = match config.loss {
            LossKind::CrossEntropy => mean_loss(&losses)?,
            LossKind::ConvexifiedCrossEntropy => convexified_loss(&losses, config.alpha)?,
        };
        Ok(data + reg)
    }

    /// Gradient of [`Network::objective`] with respect to every weight.
    pub fn gradients(&self, batch: &[Example<'_>], config: &TrainingConfig) -> Result<Vec<f64>> {
        Ok(self.loss_and_gradients(batch, config)?.1)
    }

    /// Data loss (no regularizer) and full objective gradient.
    pub(crate) fn loss_and_gradients(
        &self,
        batch: &[Example<'_>],
        config: &TrainingConfig,
    ) -> Result<(f64, Vec<f64>)> {
        let mut grad: Vec<f64> = self
            .params
            .weights
            .iter()
            .map(|w| 2.0 * config.l2_coefficient * w)
            .collect();
        if batch.is_empty() {
            return Ok((0.0, grad));
        }
        let traces = batch
            .iter()
            .map(|ex| self.forward(ex.features))
            .collect::<Result<Vec<_>>>()?;
        let losses: Vec<f64> = traces
            .iter()
            .zip(batch)
            .map(|(tr, ex)| {
                if ex.label >= self.topology.classes {
                    Err(Error::Input(format!("label {} out of range", ex.label)))
                } else {
                    Ok(cross_entropy(&tr.logits, ex.label))
                }
            })
            .collect::<Result<_>>()?;
        let (loss, sample_weights) = match config.loss {
            LossKind::CrossEntropy => {
                let n = batch.len() as f64;
                (mean_loss(&losses)?, vec![1.0 / n; batch.len()])
            }
            LossKind::ConvexifiedCrossEntropy => (
                convexified_loss(&losses, config.alpha)?,
                convexified_weights(&losses, config.alpha),
            ),
        };

        let depth = self.topology.depth();
        for ((trace, ex), (&loss_i, &weight)) in
            traces.iter().zip(batch).zip(losses.iter().zip(&sample_weights))
        {
            if is_clamped(loss_i) || weight == 0.0 {
                continue;
            }
            let mut delta: Vec<f64> = softmax(&trace.logits)
                .into_iter()
                .enumerate()
                .map(|(i, p)| weight * (p - if i == ex.label { 1.0 } else { 0.0 }))
                .collect();
            for t in (1..=depth).rev() {
                let (rows, cols) = self.topology.layer_shape(t);
                let prev = &trace.activations[t - 1];
                let off = self.layer_offset(t);
                for (i, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let g = &mut grad[off + i * cols..off + (i + 1) * cols];
                    for (gj, aj) in g.iter_mut().zip(prev) {
                        *gj += d * aj;
                    }
                }
                if t > 1 {
                    let w = self.layer(t);
                    let mut back = vec![0.0; cols - 1];
                    for i in 0..rows {
                        let d = delta[i];
                        if d == 0.0 {
                            continue;
                        }
                        let row = &w[i * cols..i * cols + cols - 1];
                        for (b, wij) in back.iter_mut().zip(row) {
                            *b += wij * d;
                        }
                    }
                    for (b, a) in back.iter_mut().zip(prev) {
                        *b *= 1.0 - a * a;
                    }
                    delta = back;
                }
            }
        }
        Ok((loss, grad))
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    lr: f64,
}

impl Adam {
    fn new(len: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            lr,
        }
    }

    fn update(&mut self, weights: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for (((w, g), m), v) in weights
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: usize,
    pub train_size: usize,
    /// Mean data loss over the last epoch's batches.
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    /// Empirical `x_t` for `t` in `0..T` over the training set.
    pub layer_maxima: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub network: Network,
    pub report: TrainingReport,
    pub config: TrainingConfig,
}

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per edge layer.
pub(crate) fn init_params(topology: &NetworkTopology, stream: &mut rng::Stream) -> ModelParams {
    let mut weights = Vec::with_capacity(topology.total_weights());
    for t in 1..=topology.depth() {
        let (rows, cols) = topology.layer_shape(t);
        let bound = 1.0 / (cols as f64).sqrt();
        for _ in 0..rows * cols {
            weights.push(stream.random_range(-bound..=bound));
        }
    }
    ModelParams { weights }
}

impl Network {
    /// The starting point [`train`] uses for `seed`.
    pub fn initialised(topology: NetworkTopology, seed: u64) -> Result<Network> {
        let params = init_params(&topology, &mut rng::stream(seed));
        Network::new(topology, params)
    }
}

/// Mini-batch Adam on the configured loss. Deterministic given `config.seed`.
pub fn train(
    train_set: &LabeledDataset,
    test_set: Option<&LabeledDataset>,
    topology: &NetworkTopology,
    config: &TrainingConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    topology.validate()?;
    if train_set.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    if train_set.feature_count() != topology.inputs {
        return Err(Error::Dimension {
            context: "training features",
            expected: topology.inputs,
            actual: train_set.feature_count(),
        });
    }
    if train_set.classes != topology.classes {
        return Err(Error::Dimension {
            context: "training classes",
            expected: topology.classes,
            actual: train_set.classes,
        });
    }
    if let Some(bad) = train_set.labels.iter().find(|&&l| l >= topology.classes) {
        return Err(Error::Input(format!("training label {bad} out of range")));
    }

    let mut stream = rng::stream(config.seed);
    let params = init_params(topology, &mut stream);
    let mut network = Network::new(topology.clone(), params)?;
    let mut adam = Adam::new(topology.total_weights(), config.learning_rate);
    let examples = train_set.examples();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut final_loss = f64::NAN;

    for epoch in 0..config.epochs {
        order.shuffle(&mut stream);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Example<'_>> = chunk.iter().map(|&i| examples[i]).collect();
            let (loss, grad) = network.loss_and_gradients(&batch, config).map_err(|e| match e {
                Error::Numeric(_) => Error::Diverged {
                    epoch,
                    batch: b,
                    loss: f64::NAN,
                },
                other => other,
            })?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss,
                });
            }
            adam.update(&mut network.params.weights, &grad);
            loss_sum += loss;
            batches += 1;
        }
        final_loss = loss_sum / batches.max(1) as f64;
        log::trace!("epoch {epoch}: loss {final_loss:.6}");
    }

    if network.params.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numeric("training produced non-finite weights".into()));
    }
    let train_accuracy = network.accuracy(&examples)?;
    let layer_maxima = network.layer_maxima(&examples)?;
    let test_accuracy = match test_set {
        Some(ts) if !ts.is_empty() => Some(network.accuracy(&ts.examples())?),
        _ => None,
    };
    Ok(TrainedModel {
        network,
        report: TrainingReport {
            epochs: config.epochs,
            train_size: train_set.len(),
            final_loss,
            train_accuracy,
            test_accuracy,
            layer_maxima,
        },
        config: config.clone(),
    })
}
