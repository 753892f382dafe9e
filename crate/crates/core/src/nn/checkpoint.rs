use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelParams, Network, NetworkTopology, TrainedModel, TrainingConfig, TrainingReport};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "dpinfer-model";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub config: TrainingConfig,
    pub report: TrainingReport,
}

/// Self-describing JSON model file. Floats are written in shortest
/// round-trip form and parsed with correct rounding, so weights reload
/// bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub topology: NetworkTopology,
    /// Layer-major, row-major, bias column last in each row.
    pub weights: Vec<f64>,
    #[serde(default)]
    pub training: Option<TrainingMetadata>,
    /// Empirical per-layer activation maxima `x_t`, `t` in `0..T`.
    #[serde(default)]
    pub layer_maxima: Option<Vec<f64>>,
}

impl Checkpoint {
    pub fn from_network(network: &Network) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            topology: network.topology.clone(),
            weights: network.params.weights.clone(),
            training: None,
            layer_maxima: None,
        }
    }

    pub fn from_trained(model: &TrainedModel) -> Self {
        Checkpoint {
            training: Some(TrainingMetadata {
                config: model.config.clone(),
                report: model.report.clone(),
            }),
            layer_maxima: Some(model.report.layer_maxima.clone()),
            ..Checkpoint::from_network(&model.network)
        }
    }

    pub fn network(&self) -> Result<Network> {
        Network::new(
            self.topology.clone(),
            ModelParams {
                weights: self.weights.clone(),
            },
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Input(format!(
                "not a model checkpoint (format '{}')",
                ckpt.format
            )));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Input(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        ckpt.topology.validate()?;
        if ckpt.weights.len() != ckpt.topology.total_weights() {
            return Err(Error::Dimension {
                context: "checkpoint weights",
                expected: ckpt.topology.total_weights(),
                actual: ckpt.weights.len(),
            });
        }
        if let Some(xs) = &ckpt.layer_maxima {
            if xs.len() != ckpt.topology.depth() {
                return Err(Error::Dimension {
                    context: "checkpoint layer maxima",
                    expected: ckpt.topology.depth(),
                    actual: xs.len(),
                });
            }
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }
}
