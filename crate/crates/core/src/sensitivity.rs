//! Closed-form global-sensitivity bounds for a trained classifier.
//!
//! The chain runs from the Lipschitz bound `rho` of the cross-entropy loss
//! to the L2 sensitivity of the whole weight vector, the per-weight L1
//! sensitivity, the sensitivity of one output-layer pre-activation and
//! finally of one softmax probability. The same inputs give the
//! on-average-remove-one stability rate.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Checkpoint, NetworkTopology};

/// Upper bound on the Lipschitz constant of the cross-entropy loss w.r.t.
/// the weights:
/// `(C - 1) * prod_{t<T} sqrt(|V_t|) x_t / (C |V_{T-1}|)`.
///
/// `layer_maxima[t]` is `x_t`, the largest absolute neuron value in layer `t`.
pub fn lipschitz_bound(topology: &NetworkTopology, layer_maxima: &[f64]) -> Result<f64> {
    let depth = topology.depth();
    if layer_maxima.len() != depth {
        return Err(Error::Dimension {
            context: "layer maxima",
            expected: depth,
            actual: layer_maxima.len(),
        });
    }
    lipschitz_from_sizes(&topology.layer_sizes()[..depth], topology.classes, layer_maxima)
}

/// Same bound from raw layer widths `|V_0| .. |V_{T-1}|` (bias included).
pub fn lipschitz_from_sizes(layer_sizes: &[usize], classes: usize, layer_maxima: &[f64]) -> Result<f64> {
    if layer_sizes.is_empty() || layer_sizes.len() != layer_maxima.len() {
        return Err(Error::Dimension {
            context: "layer maxima",
            expected: layer_sizes.len(),
            actual: layer_maxima.len(),
        });
    }
    if classes < 2 {
        return Err(Error::Input(format!("need C >= 2, got {classes}")));
    }
    if layer_maxima.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
        return Err(Error::Input("layer maxima must be finite and >= 0".into()));
    }
    let product: f64 = layer_sizes
        .iter()
        .zip(layer_maxima)
        .map(|(&v, &x)| (v as f64).sqrt() * x)
        .product();
    let c = classes as f64;
    let last = *layer_sizes.last().unwrap() as f64;
    Ok((c - 1.0) * product / (c * last))
}

/// L2 sensitivity of the trained weight vector: `2 rho / (lambda n)`.
pub fn delta2_w(rho: f64, lambda: f64, n: usize) -> f64 {
    2.0 * rho / (lambda * n as f64)
}

/// Per-weight sensitivity: `delta2_w / sqrt(|W_X|)`.
pub fn delta_omega(delta2_w: f64, total_weights: usize) -> f64 {
    delta2_w / (total_weights as f64).sqrt()
}

/// L1 sensitivity of one output-layer neuron: `a_u |V_{T-1}| delta_omega`.
pub fn delta_z(activation_bound: f64, fan_in_output: usize, delta_omega: f64) -> f64 {
    activation_bound * fan_in_output as f64 * delta_omega
}

/// Softmax-probability sensitivity as `(clipped, raw)` where
/// `raw = exp(2 delta_z) - 1` and `clipped = min(raw, 1)`.
pub fn delta_p(delta_z: f64) -> (f64, f64) {
    let raw = (2.0 * delta_z).exp_m1();
    (raw.min(1.0), raw)
}

/// On-average-remove-one stability rate: `2 rho^2 / (lambda n)`.
pub fn oaro_bound(rho: f64, lambda: f64, n: usize) -> f64 {
    2.0 * rho * rho / (lambda * n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityInputs {
    pub rho: f64,
    /// Strong-convexity constant (half the configured L2 coefficient).
    pub lambda: f64,
    pub n: usize,
    pub total_weights: usize,
    /// `|V_{T-1}|`, bias neuron included.
    pub fan_in_output: usize,
    /// Bound on hidden activations; 1 for Tanh.
    pub activation_bound: f64,
}

impl SensitivityInputs {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Input(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        positive("rho", self.rho)?;
        positive("lambda", self.lambda)?;
        positive("activation_bound", self.activation_bound)?;
        if self.n == 0 || self.total_weights == 0 || self.fan_in_output == 0 {
            return Err(Error::Input(
                "n, total_weights and fan_in_output must be >= 1".into(),
            ));
        }
        if self.fan_in_output > self.total_weights {
            return Err(Error::Input(format!(
                "fan_in_output {} exceeds total_weights {}",
                self.fan_in_output, self.total_weights
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub inputs: SensitivityInputs,
    pub rho: f64,
    pub delta2_w: f64,
    pub delta_omega: f64,
    pub delta_z: f64,
    pub delta_p: f64,
    pub delta_p_raw: f64,
    pub oaro_bound: f64,
}

impl SensitivityReport {
    pub fn from_inputs(inputs: SensitivityInputs) -> Result<Self> {
        inputs.validate()?;
        let d2w = delta2_w(inputs.rho, inputs.lambda, inputs.n);
        let dw = delta_omega(d2w, inputs.total_weights);
        let dz = delta_z(inputs.activation_bound, inputs.fan_in_output, dw);
        let (dp, dp_raw) = delta_p(dz);
        Ok(SensitivityReport {
            rho: inputs.rho,
            delta2_w: d2w,
            delta_omega: dw,
            delta_z: dz,
            delta_p: dp,
            delta_p_raw: dp_raw,
            oaro_bound: oaro_bound(inputs.rho, inputs.lambda, inputs.n),
            inputs,
        })
    }

    /// Inputs for a Tanh network of the given shape, with `rho` supplied by the caller.
    pub fn for_topology(topology: &NetworkTopology, rho: f64, n: usize, l2_coefficient: f64) -> Result<Self> {
        SensitivityReport::from_inputs(SensitivityInputs {
            rho,
            lambda: l2_coefficient / 2.0,
            n,
            total_weights: topology.total_weights(),
            fan_in_output: topology.fan_in_output(),
            activation_bound: 1.0,
        })
    }

    /// A zero output sensitivity cannot drive the exponential mechanism.
    pub fn is_degenerate(&self) -> bool {
        !(self.delta_z > 0.0 && self.delta_p > 0.0)
    }

    pub fn to_key_value(&self) -> String {
        let i = &self.inputs;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("rho", format!("{:?}", self.rho));
        kv("lambda", format!("{:?}", i.lambda));
        kv("n", i.n.to_string());
        kv("total_weights", i.total_weights.to_string());
        kv("fan_in_output", i.fan_in_output.to_string());
        kv("activation_bound", format!("{:?}", i.activation_bound));
        kv("delta2_w", format!("{:?}", self.delta2_w));
        kv("delta_omega", format!("{:?}", self.delta_omega));
        kv("delta_z", format!("{:?}", self.delta_z));
        kv("delta_p", format!("{:?}", self.delta_p));
        kv("delta_p_raw", format!("{:?}", self.delta_p_raw));
        kv("oaro_bound", format!("{:?}", self.oaro_bound));
        kv("degenerate", self.is_degenerate().to_string());
        out
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: SensitivityReport = serde_json::from_str(&text)?;
        report.inputs.validate()?;
        Ok(report)
    }
}

/// Full report for a checkpoint with recorded `x_t`, trained on `n` rows
/// with the given L2 coefficient.
pub fn report(checkpoint: &Checkpoint, n: usize, l2_coefficient: f64) -> Result<SensitivityReport> {
    let maxima = checkpoint.layer_maxima.as_ref().ok_or_else(|| {
        Error::Input("checkpoint has no recorded layer maxima; retrain or supply them".into())
    })?;
    let rho = lipschitz_bound(&checkpoint.topology, maxima)?;
    SensitivityReport::for_topology(&checkpoint.topology, rho, n, l2_coefficient)
}
