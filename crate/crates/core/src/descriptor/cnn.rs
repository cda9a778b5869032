//! Config-driven CNN inference over the {conv, relu, maxpool, fc} layer
//! vocabulary.
//!
//! Activations are stored row-major by (row, column, channel), which is also
//! the flattening order seen by fully connected layers and by the tapped
//! output. Convolution is cross-correlation with zero padding. Weights are
//! 32-bit; dot products accumulate in 64-bit.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CnnError {
    #[error("shape mismatch at layer {layer}: {reason}")]
    ShapeMismatch { layer: String, reason: String },
    #[error("weights blob has {found} values, network needs {expected}")]
    WeightSizeMismatch { expected: usize, found: usize },
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("input has {found} values, network expects {expected}")]
    InputSize { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LayerSpec {
    Conv {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        #[serde(default)]
        pad: usize,
    },
    Relu {
        name: String,
    },
    Maxpool {
        name: String,
        kernel: usize,
        stride: usize,
    },
    Fc {
        name: String,
        in_features: usize,
        out_features: usize,
    },
}

impl LayerSpec {
    pub fn name(&self) -> &str {
        match self {
            LayerSpec::Conv { name, .. }
            | LayerSpec::Relu { name }
            | LayerSpec::Maxpool { name, .. }
            | LayerSpec::Fc { name, .. } => name,
        }
    }

    /// Number of 32-bit values this layer consumes from the weights blob.
    pub fn parameter_count(&self) -> usize {
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel * kernel + out_channels,
            LayerSpec::Fc {
                in_features,
                out_features,
                ..
            } => out_features * in_features + out_features,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub side: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input: InputSpec,
    pub tap: String,
    pub layers: Vec<LayerSpec>,
}

impl NetworkConfig {
    pub fn from_toml(text: &str) -> Result<Self, CnnError> {
        toml::from_str(text).map_err(|e| CnnError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CnnError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CnnError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Total blob length, in values, over every parameterized layer.
    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::parameter_count).sum()
    }
}

/// Activation shape: spatial `(height, width, channels)` or a flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Spatial { h: usize, w: usize, c: usize },
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Spatial { h, w, c } => h * w * c,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Spatial { h, w, c } => write!(f, "{h}x{w}x{c}"),
            Shape::Flat(n) => write!(f, "{n}"),
        }
    }
}

fn window_out(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    (kernel > 0 && stride > 0 && padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

/// Propagates shapes through the network, returning `(layer name, output
/// shape)` for every layer, or the first layer whose input does not fit.
pub fn validate_network(cfg: &NetworkConfig) -> Result<Vec<(String, Shape)>, CnnError> {
    if cfg.input.side == 0 || cfg.input.channels == 0 {
        return Err(CnnError::Config(
            "input side and channels must be positive".into(),
        ));
    }
    let mut names = HashSet::new();
    for l in &cfg.layers {
        if !names.insert(l.name()) {
            return Err(CnnError::Config(format!(
                "duplicate layer name {:?}",
                l.name()
            )));
        }
    }
    if !names.contains(cfg.tap.as_str()) {
        return Err(CnnError::Config(format!(
            "tap {:?} names no layer",
            cfg.tap
        )));
    }

    let mut shape = Shape::Spatial {
        h: cfg.input.side,
        w: cfg.input.side,
        c: cfg.input.channels,
    };
    let mut trace = Vec::with_capacity(cfg.layers.len());
    for layer in &cfg.layers {
        let mismatch = |reason: String| CnnError::ShapeMismatch {
            layer: layer.name().to_string(),
            reason,
        };
        shape = match (*layer).clone() {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                pad,
                ..
            } => {
                let Shape::Spatial { h, w, c } = shape else {
                    return Err(mismatch(format!("conv needs a spatial input, got {shape}")));
                };
                if c != in_channels {
                    return Err(mismatch(format!(
                        "expects {in_channels} input channels, got {c}"
                    )));
                }
                if out_channels == 0 {
                    return Err(mismatch("zero output channels".into()));
                }
                match (
                    window_out(h, kernel, stride, pad),
                    window_out(w, kernel, stride, pad),
                ) {
                    (Some(h), Some(w)) => Shape::Spatial {
                        h,
                        w,
                        c: out_channels,
                    },
                    _ => {
                        return Err(mismatch(format!(
                            "kernel {kernel} stride {stride} does not fit {shape}"
                        )))
                    }
                }
            }
            LayerSpec::Relu { .. } => shape,
            LayerSpec::Maxpool { kernel, stride, .. } => {
                let Shape::Spatial { h, w, c } = shape else {
                    return Err(mismatch(format!(
                        "maxpool needs a spatial input, got {shape}"
                    )));
                };
                match (
                    window_out(h, kernel, stride, 0),
                    window_out(w, kernel, stride, 0),
                ) {
                    (Some(h), Some(w)) => Shape::Spatial { h, w, c },
                    _ => {
                        return Err(mismatch(format!(
                            "window {kernel} stride {stride} does not fit {shape}"
                        )))
                    }
                }
            }
            LayerSpec::Fc {
                in_features,
                out_features,
                ..
            } => {
                if shape.len() != in_features {
                    return Err(mismatch(format!(
                        "expects {in_features} input features, got {} ({shape})",
                        shape.len()
                    )));
                }
                if out_features == 0 {
                    return Err(mismatch("zero output features".into()));
                }
                Shape::Flat(out_features)
            }
        };
        trace.push((layer.name().to_string(), shape));
    }
    Ok(trace)
}

/// Raw parameters: per conv/fc layer in config order, weights then biases,
/// as 32-bit little-endian reals. Conv weights are `[out][in][kh][kw]`, fc
/// weights `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsBlob {
    pub values: Vec<f32>,
}

impl WeightsBlob {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CnnError> {
        if !bytes.len().is_multiple_of(4) {
            return Err(CnnError::Config(format!(
                "weights blob length {} is not a multiple of 4",
                bytes.len()
            )));
        }
        Ok(Self {
            values: bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

#[derive(Debug, Clone)]
enum Prepared {
    Conv {
        out_c: usize,
        in_c: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        /// Reordered to `[out][kh][kw][in]` to match activation layout.
        weights: Vec<f32>,
        bias: Vec<f32>,
    },
    Relu,
    Maxpool {
        kernel: usize,
        stride: usize,
    },
    Fc {
        in_f: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    },
}

/// A validated network with its weights loaded, ready for inference.
#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    trace: Vec<(String, Shape)>,
    layers: Vec<Prepared>,
    tap_index: usize,
}

impl Network {
    pub fn new(config: NetworkConfig, blob: &WeightsBlob) -> Result<Self, CnnError> {
        let trace = validate_network(&config)?;
        let expected = config.parameter_count();
        if blob.values.len() != expected {
            return Err(CnnError::WeightSizeMismatch {
                expected,
                found: blob.values.len(),
            });
        }
        let tap_index = config
            .layers
            .iter()
            .position(|l| l.name() == config.tap)
            .expect("validated tap");
        let mut offset = 0;
        let mut take = |n: usize| {
            let s = blob.values[offset..offset + n].to_vec();
            offset += n;
            s
        };
        let layers = config
            .layers
            .iter()
            .map(|l| match *l {
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    pad,
                    ..
                } => {
                    let raw = take(out_channels * in_channels * kernel * kernel);
                    let bias = take(out_channels);
                    let mut weights = vec![0.0f32; raw.len()];
                    for o in 0..out_channels {
                        for i in 0..in_channels {
                            for ky in 0..kernel {
                                for kx in 0..kernel {
                                    let src = ((o * in_channels + i) * kernel + ky) * kernel + kx;
                                    let dst = ((o * kernel + ky) * kernel + kx) * in_channels + i;
                                    weights[dst] = raw[src];
                                }
                            }
                        }
                    }
                    Prepared::Conv {
                        out_c: out_channels,
                        in_c: in_channels,
                        kernel,
                        stride,
                        pad,
                        weights,
                        bias,
                    }
                }
                LayerSpec::Relu { .. } => Prepared::Relu,
                LayerSpec::Maxpool { kernel, stride, .. } => Prepared::Maxpool { kernel, stride },
                LayerSpec::Fc {
                    in_features,
                    out_features,
                    ..
                } => Prepared::Fc {
                    in_f: in_features,
                    weights: take(out_features * in_features),
                    bias: take(out_features),
                },
            })
            .collect();
        Ok(Self {
            config,
            trace,
            layers,
            tap_index,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn trace(&self) -> &[(String, Shape)] {
        &self.trace
    }

    pub fn input_side(&self) -> usize {
        self.config.input.side
    }

    pub fn input_channels(&self) -> usize {
        self.config.input.channels
    }

    pub fn output_len(&self) -> usize {
        self.trace[self.tap_index].1.len()
    }

    /// Runs the network on an `side x side x channels` input laid out
    /// (row, column, channel) and returns the tap layer's activations.
    pub fn forward(&self, input: &[f32]) -> Result<Vec<f32>, CnnError> {
        let InputSpec { side, channels } = self.config.input;
        let expected = side * side * channels;
        if input.len() != expected {
            return Err(CnnError::InputSize {
                expected,
                found: input.len(),
            });
        }
        let mut act = input.to_vec();
        let (mut h, mut w, mut c) = (side, side, channels);
        for (idx, layer) in self.layers.iter().enumerate() {
            act = match layer {
                Prepared::Conv {
                    out_c,
                    in_c,
                    kernel,
                    stride,
                    pad,
                    weights,
                    bias,
                } => {
                    debug_assert_eq!(*in_c, c);
                    let (out, oh, ow) =
                        conv(&act, h, w, c, *out_c, *kernel, *stride, *pad, weights, bias);
                    (h, w, c) = (oh, ow, *out_c);
                    out
                }
                Prepared::Relu => {
                    act.iter_mut().for_each(|v| *v = v.max(0.0));
                    act
                }
                Prepared::Maxpool { kernel, stride } => {
                    let (out, oh, ow) = maxpool(&act, h, w, c, *kernel, *stride);
                    (h, w) = (oh, ow);
                    out
                }
                Prepared::Fc {
                    in_f,
                    weights,
                    bias,
                } => {
                    debug_assert_eq!(*in_f, act.len());
                    let out = fully_connected(&act, weights, bias);
                    (h, w, c) = (1, 1, out.len());
                    out
                }
            };
            if idx == self.tap_index {
                return Ok(act);
            }
        }
        unreachable!("tap layer is part of the network")
    }
}

#[allow(clippy::too_many_arguments)]
fn conv(
    input: &[f32],
    h: usize,
    w: usize,
    c: usize,
    out_c: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    weights: &[f32],
    bias: &[f32],
) -> (Vec<f32>, usize, usize) {
    let oh = (h + 2 * pad - kernel) / stride + 1;
    let ow = (w + 2 * pad - kernel) / stride + 1;
    let patch_len = kernel * kernel * c;
    let mut out = vec![0.0f32; oh * ow * out_c];
    out.par_chunks_mut(ow * out_c)
        .enumerate()
        .for_each(|(oy, row)| {
            let mut patch = vec![0.0f32; patch_len];
            for ox in 0..ow {
                // Gather the receptive field as (ky, kx, channel); padding is 0.
                for ky in 0..kernel {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    for kx in 0..kernel {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        let dst = &mut patch[(ky * kernel + kx) * c..(ky * kernel + kx + 1) * c];
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                            dst.fill(0.0);
                        } else {
                            let src = (iy as usize * w + ix as usize) * c;
                            dst.copy_from_slice(&input[src..src + c]);
                        }
                    }
                }
                let cell = &mut row[ox * out_c..(ox + 1) * out_c];
                for (o, slot) in cell.iter_mut().enumerate() {
                    let wrow = &weights[o * patch_len..(o + 1) * patch_len];
                    let acc: f64 = wrow
                        .iter()
                        .zip(&patch)
                        .map(|(&a, &b)| a as f64 * b as f64)
                        .sum();
                    *slot = (acc + bias[o] as f64) as f32;
                }
            }
        });
    (out, oh, ow)
}

fn maxpool(
    input: &[f32],
    h: usize,
    w: usize,
    c: usize,
    kernel: usize,
    stride: usize,
) -> (Vec<f32>, usize, usize) {
    let oh = (h - kernel) / stride + 1;
    let ow = (w - kernel) / stride + 1;
    let mut out = vec![f32::NEG_INFINITY; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let cell = &mut out[(oy * ow + ox) * c..(oy * ow + ox + 1) * c];
            for ky in 0..kernel {
                for kx in 0..kernel {
                    let src = ((oy * stride + ky) * w + ox * stride + kx) * c;
                    for (m, &v) in cell.iter_mut().zip(&input[src..src + c]) {
                        *m = m.max(v);
                    }
                }
            }
        }
    }
    (out, oh, ow)
}

fn fully_connected(input: &[f32], weights: &[f32], bias: &[f32]) -> Vec<f32> {
    let in_f = input.len();
    weights
        .par_chunks(in_f)
        .zip(bias.par_iter())
        .map(|(wrow, &b)| {
            let acc: f64 = wrow
                .iter()
                .zip(input)
                .map(|(&a, &x)| a as f64 * x as f64)
                .sum();
            (acc + b as f64) as f32
        })
        .collect()
}
