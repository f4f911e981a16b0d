//! Fully-connected network configuration.

use super::{InitKind, ParamSpec};
use serde::{Deserialize, Serialize};

/// Widths of a dense network, input layer first, class count last.
///
/// Hidden layers use ReLU; the final layer feeds the softmax head. All
/// parameters (weights and biases) are susceptible to mismatch and attack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub layers: Vec<usize>,
}

impl MlpConfig {
    pub fn new(layers: &[usize]) -> Self {
        MlpConfig {
            layers: layers.to_vec(),
        }
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        for i in 0..self.layers.len().saturating_sub(1) {
            let (fan_in, fan_out) = (self.layers[i], self.layers[i + 1]);
            specs.push(ParamSpec {
                name: format!("dense{i}.w"),
                shape: vec![fan_in, fan_out],
                susceptible: true,
                init: InitKind::GlorotNormal,
                fans: (fan_in, fan_out),
            });
            specs.push(ParamSpec {
                name: format!("dense{i}.b"),
                shape: vec![fan_out],
                susceptible: true,
                init: InitKind::Zeros,
                fans: (fan_in, fan_out),
            });
        }
        specs
    }
}

impl Default for MlpConfig {
    /// Three dense layers on flattened 28x28 inputs, ten classes.
    fn default() -> Self {
        MlpConfig::new(&[784, 256, 64, 10])
    }
}
