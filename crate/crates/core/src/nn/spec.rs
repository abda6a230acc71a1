use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LnsError, Result};

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

/// One layer of a [`NetworkSpec`]. Shapes are per sample; tensors carry a
/// leading batch dimension on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    /// Fully connected. Accepts any input whose element count is `inputs`.
    Dense {
        inputs: usize,
        outputs: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
    /// Direct 2-D convolution over `[channels, height, width]`, no bias.
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        pad: usize,
    },
    Relu,
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    /// Normalizes each feature (or channel) over the batch. `epsilon`
    /// defaults to `2^(2 - F)`.
    BatchNorm {
        features: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<f64>,
    },
    /// Softmax with cross-entropy loss; must be the last layer.
    SoftmaxXent {
        classes: usize,
    },
}

/// Network architecture plus the seed for weight initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub init_seed: u64,
}

impl NetworkSpec {
    /// Multi-layer perceptron: `hidden` ReLU layers, optional batch norm
    /// after each hidden dense layer, softmax head.
    pub fn mlp(
        inputs: usize,
        hidden: &[usize],
        classes: usize,
        batch_norm: bool,
        seed: u64,
    ) -> Self {
        let mut layers = Vec::new();
        let mut prev = inputs;
        for &h in hidden {
            layers.push(LayerSpec::Dense {
                inputs: prev,
                outputs: h,
                bias: true,
            });
            if batch_norm {
                layers.push(LayerSpec::BatchNorm {
                    features: h,
                    epsilon: None,
                });
            }
            layers.push(LayerSpec::Relu);
            prev = h;
        }
        layers.push(LayerSpec::Dense {
            inputs: prev,
            outputs: classes,
            bias: true,
        });
        layers.push(LayerSpec::SoftmaxXent { classes });
        NetworkSpec {
            input_shape: vec![inputs],
            layers,
            init_seed: seed,
        }
    }

    /// Per-sample shape after each layer, checking compatibility.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(LnsError::Shape(format!(
                "bad input shape {:?}",
                self.input_shape
            )));
        }
        match self.layers.last() {
            Some(LayerSpec::SoftmaxXent { .. }) => {}
            _ => return Err(LnsError::Shape("last layer must be softmax_xent".into())),
        }
        let mut cur = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer_output(layer, &cur)
                .map_err(|m| LnsError::Shape(format!("layer {i}: {m}")))?;
            if matches!(layer, LayerSpec::SoftmaxXent { .. }) && i + 1 != self.layers.len() {
                return Err(LnsError::Shape(format!(
                    "layer {i}: softmax_xent must be last"
                )));
            }
            out.push(cur.clone());
        }
        Ok(out)
    }

    pub fn classes(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::SoftmaxXent { classes }) => *classes,
            _ => 0,
        }
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(&bytes).into()
    }
}

fn spatial(k: usize, stride: usize, pad: usize, n: usize) -> std::result::Result<usize, String> {
    if k == 0 || stride == 0 {
        return Err("kernel and stride must be positive".into());
    }
    if n + 2 * pad < k {
        return Err(format!(
            "kernel {k} larger than padded input {}",
            n + 2 * pad
        ));
    }
    Ok((n + 2 * pad - k) / stride + 1)
}

fn layer_output(layer: &LayerSpec, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
    let n: usize = input.iter().product();
    match *layer {
        LayerSpec::Dense {
            inputs, outputs, ..
        } => {
            if inputs != n || outputs == 0 {
                return Err(format!("dense expects {inputs} inputs, got {input:?}"));
            }
            Ok(vec![outputs])
        }
        LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        } => {
            let [c, h, w] = input else {
                return Err(format!("conv2d needs [c, h, w], got {input:?}"));
            };
            if *c != in_ch || out_ch == 0 {
                return Err(format!("conv2d expects {in_ch} channels, got {c}"));
            }
            Ok(vec![
                out_ch,
                spatial(kernel, stride, pad, *h)?,
                spatial(kernel, stride, pad, *w)?,
            ])
        }
        LayerSpec::Relu => Ok(input.to_vec()),
        LayerSpec::MaxPool { kernel, stride } => {
            let [c, h, w] = input else {
                return Err(format!("max_pool needs [c, h, w], got {input:?}"));
            };
            Ok(vec![
                *c,
                spatial(kernel, stride, 0, *h)?,
                spatial(kernel, stride, 0, *w)?,
            ])
        }
        LayerSpec::BatchNorm { features, epsilon } => {
            if input[0] != features || !(input.len() == 1 || input.len() == 3) {
                return Err(format!(
                    "batch_norm over {features} features, got {input:?}"
                ));
            }
            if epsilon.is_some_and(|e| !(e > 0.0 && e.is_finite())) {
                return Err("batch_norm epsilon must be positive".into());
            }
            Ok(input.to_vec())
        }
        LayerSpec::SoftmaxXent { classes } => {
            if input != [classes] || classes < 2 {
                return Err(format!(
                    "softmax_xent over {classes} classes, got {input:?}"
                ));
            }
            Ok(input.to_vec())
        }
    }
}
