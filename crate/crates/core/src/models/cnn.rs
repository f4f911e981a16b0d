//! Convolutional network configuration.

use super::{InitKind, ParamSpec};
use serde::{Deserialize, Serialize};

/// A stack of conv blocks followed by dense layers and a softmax head.
///
/// Each block is `conv (valid, stride 1) -> 2x2 max-pool (ceil mode) ->
/// ReLU`; the pooled activations of the last block are flattened into the
/// dense chain. Kernel weights and every dense parameter are susceptible to
/// mismatch; convolution biases are not.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnConfig {
    /// Input image height and width.
    pub input_hw: (usize, usize),
    pub in_channels: usize,
    /// Output channels of each conv block, in order.
    pub conv_channels: Vec<usize>,
    /// Kernel height and width, shared by all blocks.
    pub kernel: (usize, usize),
    /// Hidden dense widths between the flattened features and the head.
    pub dense: Vec<usize>,
    pub classes: usize,
}

impl CnnConfig {
    /// `(height, width)` of each block's pooled output, in block order.
    pub fn block_dims(&self) -> Vec<(usize, usize)> {
        let (kh, kw) = self.kernel;
        let (mut h, mut w) = self.input_hw;
        let mut dims = Vec::with_capacity(self.conv_channels.len());
        for _ in &self.conv_channels {
            h = (h + 1 - kh).div_ceil(2);
            w = (w + 1 - kw).div_ceil(2);
            dims.push((h, w));
        }
        dims
    }

    /// Flattened feature count entering the dense chain.
    pub fn flatten_len(&self) -> usize {
        let (h, w) = *self.block_dims().last().expect("at least one block");
        h * w * self.conv_channels.last().copied().unwrap_or(self.in_channels)
    }

    /// Widths of the dense chain: flattened input, hidden layers, classes.
    pub fn dense_widths(&self) -> Vec<usize> {
        let mut widths = vec![self.flatten_len()];
        widths.extend_from_slice(&self.dense);
        widths.push(self.classes);
        widths
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let (kh, kw) = self.kernel;
        let mut specs = Vec::new();
        let mut cin = self.in_channels;
        for (i, &cout) in self.conv_channels.iter().enumerate() {
            // Glorot fans for a kernel count the full receptive field.
            let fans = (kh * kw * cin, kh * kw * cout);
            specs.push(ParamSpec {
                name: format!("conv{i}.k"),
                shape: vec![kh, kw, cin, cout],
                susceptible: true,
                init: InitKind::GlorotNormal,
                fans,
            });
            specs.push(ParamSpec {
                name: format!("conv{i}.b"),
                shape: vec![cout],
                susceptible: false,
                init: InitKind::Zeros,
                fans,
            });
            cin = cout;
        }
        let widths = self.dense_widths();
        for i in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[i], widths[i + 1]);
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

    /// Shape of the `i`-th dropout mask: blocks first, then hidden dense.
    pub fn mask_shape(&self, batch: usize, i: usize) -> Vec<usize> {
        let blocks = self.conv_channels.len();
        if i < blocks {
            let (h, w) = self.block_dims()[i];
            vec![batch, h, w, self.conv_channels[i]]
        } else {
            vec![batch, self.dense[i - blocks]]
        }
    }
}

impl Default for CnnConfig {
    /// Two 4x4/64-channel blocks over 28x28 grayscale images and a
    /// 1600-256-64 dense chain: roughly half a million parameters.
    fn default() -> Self {
        CnnConfig {
            input_hw: (28, 28),
            in_channels: 1,
            conv_channels: vec![64, 64],
            kernel: (4, 4),
            dense: vec![256, 64],
            classes: 10,
        }
    }
}
