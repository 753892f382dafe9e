//! Dense feed-forward classifier: Tanh hidden layers, Softmax output.
//!
//! Layer `t` (for `t` in `0..T`) holds its neurons plus one bias neuron whose
//! activation is fixed to 1; the output layer `T` has exactly `C` neurons and
//! no bias. Edge layer `t` (for `t` in `1..=T`) is stored as a row-major
//! matrix with one row per non-bias neuron of layer `t` and one column per
//! neuron of layer `t - 1`, the bias column last.

mod checkpoint;
mod loss;
mod train;

pub use checkpoint::{Checkpoint, TrainingMetadata, CHECKPOINT_FORMAT};
pub use loss::{convexified_loss, cross_entropy, mean_loss, softmax, PROBABILITY_FLOOR};
pub use train::{train, LossKind, TrainedModel, TrainingConfig, TrainingReport};

use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HiddenActivation {
    #[default]
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    #[default]
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkTopology {
    /// Number of input features `m` (the input layer has `m + 1` neurons).
    pub inputs: usize,
    /// Hidden layer widths, bias neurons excluded.
    pub hidden: Vec<usize>,
    /// Output width `C`.
    pub classes: usize,
    #[serde(default)]
    pub hidden_activation: HiddenActivation,
    #[serde(default)]
    pub output_activation: OutputActivation,
}

impl NetworkTopology {
    pub fn new(inputs: usize, hidden: Vec<usize>, classes: usize) -> Result<Self> {
        let topo = NetworkTopology {
            inputs,
            hidden,
            classes,
            hidden_activation: HiddenActivation::Tanh,
            output_activation: OutputActivation::Softmax,
        };
        topo.validate()?;
        Ok(topo)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs == 0 {
            return Err(Error::Input("network needs at least one input feature".into()));
        }
        if self.hidden.is_empty() {
            return Err(Error::Input("network needs at least one hidden layer".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Input("hidden layers must be non-empty".into()));
        }
        if self.classes < 2 {
            return Err(Error::Input(format!(
                "output layer needs C >= 2 neurons, got {}",
                self.classes
            )));
        }
        Ok(())
    }

    /// Number of edge layers `T`.
    pub fn depth(&self) -> usize {
        self.hidden.len() + 1
    }

    /// `|V_t|` for `t` in `0..=T`, bias neurons included for `t < T`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.inputs + 1)
            .chain(self.hidden.iter().map(|h| h + 1))
            .chain(std::iter::once(self.classes))
            .collect()
    }

    /// `(rows, cols)` of edge layer `t` in `1..=T`.
    pub fn layer_shape(&self, t: usize) -> (usize, usize) {
        assert!(t >= 1 && t <= self.depth(), "edge layer {t} out of range");
        let sizes = self.layer_sizes();
        let rows = if t == self.depth() {
            self.classes
        } else {
            sizes[t] - 1
        };
        (rows, sizes[t - 1])
    }

    /// `|W_X|`: every edge, bias edges included.
    pub fn total_weights(&self) -> usize {
        (1..=self.depth())
            .map(|t| {
                let (r, c) = self.layer_shape(t);
                r * c
            })
            .sum()
    }

    /// `|V_{T-1}|`, bias neuron included.
    pub fn fan_in_output(&self) -> usize {
        self.layer_sizes()[self.depth() - 1]
    }

    /// Start offset of each edge layer in the flat weight vector.
    fn offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.depth());
        let mut acc = 0;
        for t in 1..=self.depth() {
            offs.push(acc);
            let (r, c) = self.layer_shape(t);
            acc += r * c;
        }
        offs
    }
}

/// Flat weight vector, layer-major then row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub weights: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(topology: &NetworkTopology) -> Self {
        ModelParams {
            weights: vec![0.0; topology.total_weights()],
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }
}

/// Activations and outputs of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `a_t` for `t` in `0..T`, bias activation (1.0) appended last.
    pub activations: Vec<Vec<f64>>,
    /// Output pre-activations `z_T`.
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Largest absolute neuron value per layer `0..T`, bias included.
    pub layer_max_abs: Vec<f64>,
}

impl ForwardTrace {
    pub fn predicted_class(&self) -> usize {
        argmax(&self.probabilities)
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A topology together with its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub topology: NetworkTopology,
    pub params: ModelParams,
    offsets: Vec<usize>,
}

impl Network {
    pub fn new(topology: NetworkTopology, params: ModelParams) -> Result<Self> {
        topology.validate()?;
        if params.weights.len() != topology.total_weights() {
            return Err(Error::Dimension {
                context: "model weights",
                expected: topology.total_weights(),
                actual: params.weights.len(),
            });
        }
        if params.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("model contains non-finite weights".into()));
        }
        let offsets = topology.offsets();
        Ok(Network {
            topology,
            params,
            offsets,
        })
    }

    pub fn zeros(topology: NetworkTopology) -> Result<Self> {
        let params = ModelParams::zeros(&topology);
        Network::new(topology, params)
    }

    /// Weights of edge layer `t` in `1..=T`.
    pub fn layer(&self, t: usize) -> &[f64] {
        let (r, c) = self.topology.layer_shape(t);
        let start = self.offsets[t - 1];
        &self.params.weights[start..start + r * c]
    }

    pub(crate) fn layer_offset(&self, t: usize) -> usize {
        self.offsets[t - 1]
    }

    /// Flat index of the edge from neuron `j` of layer `t-1` into neuron `i` of layer `t`.
    pub fn weight_index(&self, t: usize, i: usize, j: usize) -> usize {
        let (r, c) = self.topology.layer_shape(t);
        assert!(i < r && j < c);
        self.offsets[t - 1] + i * c + j
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        if x.len() != self.topology.inputs {
            return Err(Error::Dimension {
                context: "forward input",
                expected: self.topology.inputs,
                actual: x.len(),
            });
        }
        let depth = self.topology.depth();
        let mut activations = Vec::with_capacity(depth);
        let mut a0 = x.to_vec();
        a0.push(1.0);
        activations.push(a0);
        let mut logits = Vec::new();
        for t in 1..=depth {
            let (rows, cols) = self.topology.layer_shape(t);
            let w = self.layer(t);
            let prev = &activations[t - 1];
            let z: Vec<f64> = (0..rows)
                .map(|i| dot(&w[i * cols..(i + 1) * cols], prev))
                .collect();
            if t == depth {
                logits = z;
            } else {
                let mut a: Vec<f64> = z.into_iter().map(f64::tanh).collect();
                a.push(1.0);
                activations.push(a);
            }
        }
        let probabilities = softmax(&logits);
        let layer_max_abs = activations
            .iter()
            .map(|a| a.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            .collect();
        Ok(ForwardTrace {
            activations,
            logits,
            probabilities,
            layer_max_abs,
        })
    }

    /// Output logits only.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.logits)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.probabilities)
    }

    /// Per-sample cross-entropy losses over a batch.
    pub fn sample_losses(&self, batch: &[Example<'_>]) -> Result<Vec<f64>> {
        batch
            .iter()
            .map(|ex| {
                self.check_label(ex.label)?;
                Ok(cross_entropy(&self.forward(ex.features)?.logits, ex.label))
            })
            .collect()
    }

    /// Mean cross-entropy over a non-empty batch, regularizer excluded.
    pub fn loss_plain(&self, batch: &[Example<'_>]) -> Result<f64> {
        mean_loss(&self.sample_losses(batch)?)
    }

    /// Risk-averting loss `(1/alpha) ln[(1/n) sum exp(alpha l_i)]`.
    pub fn loss_convexified(&self, batch: &[Example<'_>], alpha: f64) -> Result<f64> {
        convexified_loss(&self.sample_losses(batch)?, alpha)
    }

    /// Fraction of rows whose argmax prediction matches the label.
    pub fn accuracy(&self, batch: &[Example<'_>]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Input("accuracy of an empty set".into()));
        }
        let mut hits = 0usize;
        for ex in batch {
            if self.forward(ex.features)?.predicted_class() == ex.label {
                hits += 1;
            }
        }
        Ok(hits as f64 / batch.len() as f64)
    }

    /// Empirical `x_t` for `t` in `0..T`: max |activation| over the rows, bias included.
    pub fn layer_maxima(&self, rows: &[Example<'_>]) -> Result<Vec<f64>> {
        let mut maxima = vec![0.0_f64; self.topology.depth()];
        for ex in rows {
            let trace = self.forward(ex.features)?;
            for (m, v) in maxima.iter_mut().zip(&trace.layer_max_abs) {
                *m = m.max(*v);
            }
        }
        Ok(maxima)
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.topology.classes {
            return Err(Error::Input(format!(
                "label {label} outside [0, {})",
                self.topology.classes
            )));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn adult_shape() -> NetworkTopology {
        NetworkTopology::new(14, vec![128], 2).unwrap()
    }

    #[test]
    fn weight_counts_include_bias_edges() {
        let t = adult_shape();
        assert_eq!(t.layer_sizes(), vec![15, 129, 2]);
        assert_eq!(t.total_weights(), 15 * 128 + 129 * 2);
        assert_eq!(t.fan_in_output(), 129);
        let texas = NetworkTopology::new(6169, vec![128], 100).unwrap();
        assert_eq!(texas.total_weights(), 802_660);
    }

    #[test]
    fn topology_rejects_bad_shapes() {
        assert!(NetworkTopology::new(3, vec![], 2).is_err());
        assert!(NetworkTopology::new(3, vec![4], 1).is_err());
        assert!(NetworkTopology::new(0, vec![4], 2).is_err());
    }

    #[test]
    fn zero_weights_give_uniform_output() {
        let net = Network::zeros(NetworkTopology::new(3, vec![4], 5).unwrap()).unwrap();
        let tr = net.forward(&[0.3, -2.0, 7.0]).unwrap();
        assert!(tr.logits.iter().all(|&z| z == 0.0));
        for p in &tr.probabilities {
            assert!((p - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn two_class_logits_one_zero() {
        // Hidden layer of zeros; output bias edges produce logits (1, 0).
        let topo = NetworkTopology::new(1, vec![1], 2).unwrap();
        let mut net = Network::zeros(topo).unwrap();
        let idx = net.weight_index(2, 0, 1);
        net.params.weights[idx] = 1.0;
        let tr = net.forward(&[0.0]).unwrap();
        assert_eq!(tr.logits, vec![1.0, 0.0]);
        let e = std::f64::consts::E;
        assert!((tr.probabilities[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((tr.probabilities[0] - 0.7311).abs() < 1e-4);
        assert!((tr.probabilities[1] - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn dimension_mismatch_is_structured() {
        let net = Network::zeros(NetworkTopology::new(3, vec![2], 2).unwrap()).unwrap();
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::Dimension { expected: 3, actual: 1, .. })
        ));
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    proptest! {
        #[test]
        fn softmax_output_is_a_distribution(
            weights in proptest::collection::vec(-3.0f64..3.0, 3 * 4 + 5 * 3),
            x in proptest::collection::vec(-5.0f64..5.0, 2),
        ) {
            let topo = NetworkTopology::new(2, vec![4], 3).unwrap();
            let net = Network::new(topo, ModelParams { weights }).unwrap();
            let tr = net.forward(&x).unwrap();
            let sum: f64 = tr.probabilities.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(tr.probabilities.iter().all(|&p| p > 0.0 && p < 1.0));
            for a in &tr.activations[1..] {
                prop_assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }
    }
}
