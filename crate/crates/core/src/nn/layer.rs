use serde::{Deserialize, Serialize};

/// One stage of a network.
///
/// Sequence layers operate on `[time, channels]` activations; `Dense` and
/// `Softmax` operate on flat vectors. Convolution weights are stored as
/// `[width, in_channels, out_channels]` so the inner loop runs over output
/// channels contiguously.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    /// Index sequence `[T]` to rows `[T, dim]`.
    Embedding {
        vocab: usize,
        dim: usize,
    },
    /// Valid (unpadded) 1-D cross-correlation.
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        width: usize,
        #[serde(default = "one")]
        stride: usize,
    },
    Relu,
    /// Non-overlapping max pooling along time; a trailing remainder is dropped.
    MaxPool {
        size: usize,
    },
    /// Max over the whole time axis, `[T, C]` to `[C]`.
    #[serde(rename = "maxpool-over-time")]
    GlobalMaxPool,
    Flatten,
    Dense {
        inputs: usize,
        units: usize,
    },
    /// Inverted dropout: scaled at train time, identity at inference.
    Dropout {
        p: f64,
    },
    /// Runs each branch on the same input and concatenates the flat outputs.
    Concat {
        branches: Vec<Vec<LayerSpec>>,
    },
    Softmax,
}

fn one() -> usize {
    1
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Embedding { .. } => "embedding",
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::GlobalMaxPool => "maxpool-over-time",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Concat { .. } => "concat",
            LayerSpec::Softmax => "softmax",
        }
    }

    /// Shapes of this layer's own parameters (branches of `Concat` excluded).
    pub fn own_param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Embedding { vocab, dim } => vec![vec![vocab, dim]],
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                width,
                ..
            } => vec![vec![width, in_channels, out_channels], vec![out_channels]],
            LayerSpec::Dense { inputs, units } => vec![vec![units, inputs], vec![units]],
            _ => Vec::new(),
        }
    }

    /// Output shape for a given input shape, or a description of the conflict.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        match self {
            LayerSpec::Embedding { vocab, dim } => {
                if *vocab == 0 || *dim == 0 {
                    return Err("embedding needs vocab > 0 and dim > 0".into());
                }
                match input {
                    [t] => Ok(vec![*t, *dim]),
                    _ => Err(format!("embedding expects [T] indices, got {input:?}")),
                }
            }
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                width,
                stride,
            } => {
                if *width == 0 || *stride == 0 || *out_channels == 0 {
                    return Err("conv1d needs positive width, stride and channels".into());
                }
                match input {
                    [t, c] if c == in_channels => {
                        if t < width {
                            Err(format!("conv1d width {width} exceeds sequence length {t}"))
                        } else {
                            Ok(vec![(t - width) / stride + 1, *out_channels])
                        }
                    }
                    _ => Err(format!("conv1d expects [T, {in_channels}], got {input:?}")),
                }
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::MaxPool { size } => match input {
                [t, c] if *size > 0 && t >= size => Ok(vec![t / size, *c]),
                _ => Err(format!("maxpool of size {size} cannot pool {input:?}")),
            },
            LayerSpec::GlobalMaxPool => match input {
                [_, c] => Ok(vec![*c]),
                _ => Err(format!("maxpool-over-time expects [T, C], got {input:?}")),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { inputs, units } => {
                if *units == 0 {
                    return Err("dense needs units > 0".into());
                }
                match input {
                    [n] if n == inputs => Ok(vec![*units]),
                    _ => Err(format!("dense expects [{inputs}], got {input:?}")),
                }
            }
            LayerSpec::Dropout { p } => {
                if (0.0..1.0).contains(p) {
                    Ok(input.to_vec())
                } else {
                    Err(format!("dropout probability {p} outside [0, 1)"))
                }
            }
            LayerSpec::Concat { branches } => {
                if branches.is_empty() {
                    return Err("concat needs at least one branch".into());
                }
                let mut total = 0;
                for (b, branch) in branches.iter().enumerate() {
                    let mut shape = input.to_vec();
                    for layer in branch {
                        if matches!(layer, LayerSpec::Softmax | LayerSpec::Embedding { .. }) {
                            return Err(format!("{} not allowed inside a concat branch", layer.name()));
                        }
                        shape = layer.output_shape(&shape).map_err(|e| format!("branch {b}: {e}"))?;
                    }
                    match shape.as_slice() {
                        [n] => total += n,
                        other => return Err(format!("branch {b} must end flat, ends at {other:?}")),
                    }
                }
                Ok(vec![total])
            }
            LayerSpec::Softmax => match input {
                [n] if *n >= 2 => Ok(vec![*n]),
                _ => Err(format!("softmax expects [K] with K >= 2, got {input:?}")),
            },
        }
    }
}

/// Parameter shapes of a layer stack in depth-first order.
pub(crate) fn collect_param_shapes(layers: &[LayerSpec], out: &mut Vec<Vec<usize>>) {
    for layer in layers {
        out.extend(layer.own_param_shapes());
        if let LayerSpec::Concat { branches } = layer {
            for branch in branches {
                collect_param_shapes(branch, out);
            }
        }
    }
}

/// Glorot-style fan sizes used for uniform initialization.
pub(crate) fn fans(layer: &LayerSpec) -> (usize, usize) {
    match *layer {
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            width,
            ..
        } => (in_channels * width, out_channels * width),
        LayerSpec::Dense { inputs, units } => (inputs, units),
        // each embedding row is an independent lookup
        LayerSpec::Embedding { dim, .. } => (1, dim),
        _ => (1, 1),
    }
}
