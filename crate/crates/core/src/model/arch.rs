//! JSON architecture specs, the three built-in VGG-style architectures, and
//! seeded weight initialization.
//!
//! Initialization draws from `Xoshiro256PlusPlus::seed_from_u64(seed)`,
//! layer by layer in declaration order, weights before biases. Layers with a
//! relu activation get He-uniform weights (`±sqrt(6 / fan_in)`), everything
//! else Glorot-uniform (`±sqrt(6 / (fan_in + fan_out))`). For conv,
//! `fan_in = k1·k2·I` and `fan_out = k1·k2·H`. Biases start at zero.

use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use super::{Activation, ChannelNorm, Conv2D, Dense, FeatureShape, Layer, Model, Padding};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

fn default_kernel() -> [usize; 2] {
    [3, 3]
}

fn default_padding() -> Padding {
    Padding::Same
}

fn default_activation() -> Activation {
    Activation::None
}

fn default_epsilon() -> f32 {
    1e-3
}

fn default_momentum() -> f32 {
    0.99
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        #[serde(default = "default_kernel")]
        kernel: [usize; 2],
        #[serde(default = "default_padding")]
        padding: Padding,
        #[serde(default = "default_activation")]
        activation: Activation,
    },
    Dense {
        units: usize,
        #[serde(default = "default_activation")]
        activation: Activation,
    },
    MaxPool2d,
    Flatten,
    Activation {
        function: Activation,
    },
    Dropout {
        rate: f32,
    },
    ChannelNorm {
        #[serde(default = "default_epsilon")]
        epsilon: f32,
        #[serde(default = "default_momentum")]
        momentum: f32,
    },
}

impl ArchSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("architecture spec: {e}")))
    }

    /// Instantiates the spec with freshly initialized parameters.
    pub fn build(&self, seed: u64) -> Result<Model> {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let [rows, cols, channels] = self.input_shape;
        let mut shape = FeatureShape::Spatial {
            rows,
            cols,
            channels,
        };
        let mut layers = Vec::with_capacity(self.layers.len());
        for (index, spec) in self.layers.iter().enumerate() {
            let layer = match *spec {
                LayerSpec::Conv2d {
                    filters,
                    kernel: [k1, k2],
                    padding,
                    activation,
                } => {
                    let FeatureShape::Spatial { channels, .. } = shape else {
                        return Err(Error::LayerShape {
                            layer: index,
                            message: "conv2d needs a spatial input".into(),
                        });
                    };
                    if filters == 0 || k1 == 0 || k2 == 0 {
                        return Err(Error::Config(format!("layer {index}: zero-sized conv")));
                    }
                    let weights = init_weights(
                        &mut rng,
                        vec![k1, k2, channels, filters],
                        k1 * k2 * channels,
                        k1 * k2 * filters,
                        activation,
                    )?;
                    Layer::Conv2D(Conv2D {
                        weights,
                        bias: Tensor::zeros([filters])?,
                        padding,
                        activation,
                    })
                }
                LayerSpec::Dense { units, activation } => {
                    let FeatureShape::Flat { features } = shape else {
                        return Err(Error::LayerShape {
                            layer: index,
                            message: "dense needs a flat input; insert a flatten layer".into(),
                        });
                    };
                    if units == 0 {
                        return Err(Error::Config(format!("layer {index}: zero units")));
                    }
                    let weights =
                        init_weights(&mut rng, vec![features, units], features, units, activation)?;
                    Layer::Dense(Dense {
                        weights,
                        bias: Tensor::zeros([units])?,
                        activation,
                    })
                }
                LayerSpec::MaxPool2d => Layer::MaxPool2D,
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Activation { function } => Layer::Activation(function),
                LayerSpec::Dropout { rate } => Layer::Dropout { rate },
                LayerSpec::ChannelNorm { epsilon, momentum } => {
                    Layer::ChannelNorm(ChannelNorm::identity(shape.channels(), epsilon, momentum)?)
                }
            };
            shape = super::layer_output_shape(index, &layer, shape)?;
            layers.push(layer);
        }
        Model::new(self.input_shape, layers)
    }
}

fn init_weights(
    rng: &mut Xoshiro256PlusPlus,
    dims: Vec<usize>,
    fan_in: usize,
    fan_out: usize,
    activation: Activation,
) -> Result<Tensor> {
    let limit = match activation {
        Activation::Relu => (6.0 / fan_in as f64).sqrt(),
        _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
    } as f32;
    let n: usize = dims.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::from_vec(dims, data)
}

/// Stand-in VGG-style architectures: conv-heavy (A), balanced (B) and
/// dense-heavy (C). Weight counts for a 28×28×1 input with 10 classes:
///
/// | arch | conv weights | dense weights |
/// |------|--------------|---------------|
/// | A    | 92,448       | 11,520        |
/// | B    | 55,584       | 75,008        |
/// | C    | 72           | 201,984       |
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BuiltinArch {
    A,
    B,
    C,
}

impl FromStr for BuiltinArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(BuiltinArch::A),
            "B" | "b" => Ok(BuiltinArch::B),
            "C" | "c" => Ok(BuiltinArch::C),
            other => Err(Error::Config(format!(
                "unknown builtin architecture {other:?}"
            ))),
        }
    }
}

/// Layer list of a built-in architecture for the given input and class count.
pub fn builtin(arch: BuiltinArch, input_shape: [usize; 3], classes: usize) -> ArchSpec {
    use LayerSpec::*;
    let conv = |filters| Conv2d {
        filters,
        kernel: [3, 3],
        padding: Padding::Same,
        activation: super::Activation::Relu,
    };
    let relu_dense = |units| Dense {
        units,
        activation: super::Activation::Relu,
    };
    let head = Dense {
        units: classes,
        activation: super::Activation::Softmax,
    };
    let layers = match arch {
        BuiltinArch::A => vec![
            conv(32),
            MaxPool2d,
            conv(64),
            MaxPool2d,
            conv(128),
            MaxPool2d,
            Flatten,
            Dropout { rate: 0.25 },
            head,
        ],
        BuiltinArch::B => vec![
            conv(32),
            MaxPool2d,
            conv(64),
            MaxPool2d,
            conv(64),
            MaxPool2d,
            Flatten,
            relu_dense(128),
            Dropout { rate: 0.25 },
            head,
        ],
        BuiltinArch::C => vec![
            conv(8),
            MaxPool2d,
            Flatten,
            relu_dense(128),
            Dropout { rate: 0.25 },
            head,
        ],
    };
    ArchSpec {
        input_shape,
        layers,
    }
}
