//! Declarative description of a feed-forward network.
//!
//! Data flows through a chain of *nodes*: node 0 is the network input and
//! node `k` is the output of the `k`-th layer (1-based). A `skip_add` layer
//! refers to an earlier node by this index.

use serde::{Deserialize, Serialize};

use super::activation::ActivationKind;
use crate::{Error, Result};

/// Map applied to logits to obtain probabilities. Never part of the layer chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalMap {
    #[default]
    None,
    Softmax,
    Sigmoid,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    /// Affine map; flattens image-shaped inputs.
    Dense { units: usize },
    Conv2d {
        filters: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Maxpool {
        size: usize,
        /// Defaults to `size` (non-overlapping windows).
        #[serde(default)]
        stride: Option<usize>,
    },
    /// Per-feature (flat input) or per-channel (image input) normalization.
    Batchnorm,
    Activation { activation: ActivationKind },
    /// Adds the output of node `from` to this layer's input.
    SkipAdd { from: usize },
}

impl LayerSpec {
    pub fn is_parametric(&self) -> bool {
        matches!(
            self,
            LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. } | LayerSpec::Batchnorm
        )
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Maxpool { .. } => "maxpool",
            LayerSpec::Batchnorm => "batchnorm",
            LayerSpec::Activation { .. } => "activation",
            LayerSpec::SkipAdd { .. } => "skip_add",
        }
    }

    pub fn dense(units: usize) -> Self {
        LayerSpec::Dense { units }
    }

    pub fn conv(filters: usize, kernel: usize) -> Self {
        LayerSpec::Conv2d {
            filters,
            kernel,
            stride: 1,
            padding: 0,
        }
    }

    pub fn act(activation: ActivationKind) -> Self {
        LayerSpec::Activation { activation }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// `[d]` for vectors or `[channels, height, width]` for images.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub num_outputs: usize,
    #[serde(default)]
    pub final_map: FinalMap,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn image(shape: &[usize], layer: usize, what: &str) -> Result<(usize, usize, usize)> {
    match *shape {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::InvalidSpec(format!(
            "layer {layer} ({what}) needs a [channels, height, width] input, got {shape:?}"
        ))),
    }
}

impl ModelSpec {
    /// Dense stack: `hidden` widths, each followed by optional batchnorm and
    /// `activation`, then a dense output layer.
    pub fn mlp(
        input_dim: usize,
        hidden: &[usize],
        num_outputs: usize,
        activation: ActivationKind,
        batchnorm: bool,
        final_map: FinalMap,
    ) -> Self {
        let mut layers = Vec::new();
        for &h in hidden {
            layers.push(LayerSpec::dense(h));
            if batchnorm {
                layers.push(LayerSpec::Batchnorm);
            }
            layers.push(LayerSpec::act(activation));
        }
        layers.push(LayerSpec::dense(num_outputs));
        ModelSpec {
            input_shape: vec![input_dim],
            layers,
            num_outputs,
            final_map,
        }
    }

    pub fn input_len(&self) -> usize {
        numel(&self.input_shape)
    }

    /// Shapes of every node (input first). Validates the whole spec.
    pub fn node_shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.layers.is_empty() {
            return Err(Error::InvalidSpec("layer list is empty".into()));
        }
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::InvalidSpec(format!(
                "input shape {:?} must be non-empty with positive extents",
                self.input_shape
            )));
        }
        if !matches!(self.input_shape.len(), 1 | 3) {
            return Err(Error::InvalidSpec(format!(
                "input shape {:?} must be [d] or [c, h, w]",
                self.input_shape
            )));
        }
        let mut nodes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let k = i + 1;
            let input = &nodes[i];
            let out = match *layer {
                LayerSpec::Dense { units } => {
                    if units == 0 {
                        return Err(Error::InvalidSpec(format!("layer {k}: dense with 0 units")));
                    }
                    vec![units]
                }
                LayerSpec::Conv2d {
                    filters,
                    kernel,
                    stride,
                    padding,
                } => {
                    let (_, h, w) = image(input, k, "conv2d")?;
                    if filters == 0 || kernel == 0 || stride == 0 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {k}: conv2d filters, kernel and stride must be positive"
                        )));
                    }
                    let (ph, pw) = (h + 2 * padding, w + 2 * padding);
                    if kernel > ph || kernel > pw {
                        return Err(Error::InvalidSpec(format!(
                            "layer {k}: kernel {kernel} larger than padded input {ph}x{pw}"
                        )));
                    }
                    vec![filters, (ph - kernel) / stride + 1, (pw - kernel) / stride + 1]
                }
                LayerSpec::Maxpool { size, stride } => {
                    let (c, h, w) = image(input, k, "maxpool")?;
                    let stride = stride.unwrap_or(size);
                    if size == 0 || stride == 0 || size > h || size > w {
                        return Err(Error::InvalidSpec(format!(
                            "layer {k}: maxpool window {size}/stride {stride} does not fit {h}x{w}"
                        )));
                    }
                    vec![c, (h - size) / stride + 1, (w - size) / stride + 1]
                }
                LayerSpec::Batchnorm | LayerSpec::Activation { .. } => input.clone(),
                LayerSpec::SkipAdd { from } => {
                    if from + 1 >= k {
                        return Err(Error::InvalidSpec(format!(
                            "layer {k}: skip_add source node {from} must precede its input node {}",
                            k - 1
                        )));
                    }
                    if nodes[from] != *input {
                        return Err(Error::InvalidSpec(format!(
                            "layer {k}: skip_add source node {from} has shape {:?}, input has shape {:?}",
                            nodes[from], input
                        )));
                    }
                    input.clone()
                }
            };
            nodes.push(out);
        }
        let last = nodes.last().expect("non-empty");
        if numel(last) != self.num_outputs || last.len() != 1 {
            return Err(Error::InvalidSpec(format!(
                "last layer produces {last:?}, expected [{}]",
                self.num_outputs
            )));
        }
        if self.final_map == FinalMap::Softmax && self.num_outputs < 2 {
            return Err(Error::InvalidSpec("softmax needs at least two outputs".into()));
        }
        Ok(nodes)
    }

    pub fn validate(&self) -> Result<()> {
        self.node_shapes().map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_pool_shapes() {
        let spec = ModelSpec {
            input_shape: vec![1, 6, 6],
            layers: vec![
                LayerSpec::conv(2, 3),
                LayerSpec::Maxpool {
                    size: 2,
                    stride: None,
                },
                LayerSpec::dense(3),
            ],
            num_outputs: 3,
            final_map: FinalMap::Softmax,
        };
        let nodes = spec.node_shapes().unwrap();
        assert_eq!(nodes[1], vec![2, 4, 4]);
        assert_eq!(nodes[2], vec![2, 2, 2]);
        assert_eq!(nodes[3], vec![3]);
    }

    #[test]
    fn skip_add_shape_mismatch_is_rejected() {
        let spec = ModelSpec {
            input_shape: vec![2],
            layers: vec![
                LayerSpec::dense(4),
                LayerSpec::act(ActivationKind::Elu),
                LayerSpec::SkipAdd { from: 0 },
                LayerSpec::dense(1),
            ],
            num_outputs: 1,
            final_map: FinalMap::None,
        };
        let err = spec.validate().unwrap_err().to_string();
        assert!(err.contains("skip_add"), "{err}");
    }

    #[test]
    fn empty_and_output_mismatch() {
        let mut spec = ModelSpec::mlp(2, &[4], 1, ActivationKind::Elu, false, FinalMap::None);
        spec.num_outputs = 2;
        assert!(spec.validate().is_err());
        spec.layers.clear();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn json_shape() {
        let spec = ModelSpec::mlp(2, &[4], 1, ActivationKind::Elu, true, FinalMap::Sigmoid);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains(r#"{"kind":"batchnorm"}"#), "{text}");
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
