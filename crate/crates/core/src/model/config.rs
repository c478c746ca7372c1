use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_LAYER_UNITS: [usize; 4] = [200, 64, 32, 32];

/// Architecture of the regressor: optional tanh dense reducer, stacked
/// bidirectional LSTM layers, one linear output neuron per time step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub reducer_dim: Option<usize>,
    pub layer_units: Vec<usize>,
    /// Squash the output neuron with tanh. Off by default.
    #[serde(default)]
    pub output_tanh: bool,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            reducer_dim: None,
            layer_units: DEFAULT_LAYER_UNITS.to_vec(),
            output_tanh: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim must be positive"));
        }
        if self.reducer_dim == Some(0) {
            return Err(Error::invalid("reducer_dim must be positive when present"));
        }
        if self.layer_units.is_empty() || self.layer_units.contains(&0) {
            return Err(Error::invalid("layer_units must be non-empty and positive"));
        }
        Ok(())
    }

    /// Width of the first recurrent layer's input.
    pub fn recurrent_input_dim(&self) -> usize {
        self.reducer_dim.unwrap_or(self.input_dim)
    }

    /// Compact JSON with fields in declaration order.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}
