//! Sequential CNN representation.
//!
//! Activations are channels-last: a spatial feature map is `(rows, cols,
//! channels)` and flattening walks row, then column, then channel. Conv
//! weights are `(k1, k2, in_channels, filters)` and dense weights
//! `(inputs, units)`, so for both prunable kinds the last weight axis indexes
//! filters.

mod arch;
mod cpmf;

pub use arch::{builtin, ArchSpec, BuiltinArch, LayerSpec};
pub use cpmf::{load, read_from, save, write_to, MAGIC, VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Relu,
    Softmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Valid,
    Same,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2D<T = f32> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub padding: Padding,
    pub activation: Activation,
}

impl<T: Real> Conv2D<T> {
    pub fn kernel(&self) -> (usize, usize) {
        let d = self.weights.dims();
        (d[0], d[1])
    }

    pub fn in_channels(&self) -> usize {
        self.weights.dims()[2]
    }

    pub fn filters(&self) -> usize {
        self.weights.dims()[3]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T = f32> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub activation: Activation,
}

impl<T: Real> Dense<T> {
    pub fn inputs(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn units(&self) -> usize {
        self.weights.dims()[1]
    }
}

/// Batch-normalization-style per-channel affine normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelNorm<T = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub epsilon: f32,
    /// Weight of the old running statistic in each training update.
    pub momentum: f32,
}

impl<T: Real> ChannelNorm<T> {
    pub fn identity(channels: usize, epsilon: f32, momentum: f32) -> Result<Self> {
        Ok(ChannelNorm {
            gamma: Tensor::full([channels], T::one())?,
            beta: Tensor::zeros([channels])?,
            running_mean: Tensor::zeros([channels])?,
            running_var: Tensor::full([channels], T::one())?,
            epsilon,
            momentum,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Drops the per-channel entries at `indices` from all four vectors.
    pub fn delete_channels(&mut self, indices: &[usize]) -> Result<()> {
        self.gamma = self.gamma.delete_indices(0, indices)?;
        self.beta = self.beta.delete_indices(0, indices)?;
        self.running_mean = self.running_mean.delete_indices(0, indices)?;
        self.running_var = self.running_var.delete_indices(0, indices)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T = f32> {
    Conv2D(Conv2D<T>),
    Dense(Dense<T>),
    /// 2×2 window, stride 2, floor on odd extents.
    MaxPool2D,
    Flatten,
    Activation(Activation),
    Dropout {
        rate: f32,
    },
    ChannelNorm(ChannelNorm<T>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    #[serde(rename = "conv2d")]
    Conv2D,
    Dense,
    #[serde(rename = "max_pool2d")]
    MaxPool2D,
    Flatten,
    Activation,
    Dropout,
    ChannelNorm,
}

/// How a layer takes part in surgery.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerRole {
    /// Owns filters that can be removed.
    Prunable,
    /// Preserves the channel count; at most needs per-channel slicing.
    PassThrough,
    /// Changes feature-map structure; removed channels must be re-indexed.
    ShapeTransforming,
}

impl LayerKind {
    pub fn role(self) -> LayerRole {
        match self {
            LayerKind::Conv2D | LayerKind::Dense => LayerRole::Prunable,
            LayerKind::MaxPool2D
            | LayerKind::Activation
            | LayerKind::Dropout
            | LayerKind::ChannelNorm => LayerRole::PassThrough,
            LayerKind::Flatten => LayerRole::ShapeTransforming,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv2D => "conv2d",
            LayerKind::Dense => "dense",
            LayerKind::MaxPool2D => "max_pool2d",
            LayerKind::Flatten => "flatten",
            LayerKind::Activation => "activation",
            LayerKind::Dropout => "dropout",
            LayerKind::ChannelNorm => "channel_norm",
        }
    }
}

impl<T: Real> Layer<T> {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv2D(_) => LayerKind::Conv2D,
            Layer::Dense(_) => LayerKind::Dense,
            Layer::MaxPool2D => LayerKind::MaxPool2D,
            Layer::Flatten => LayerKind::Flatten,
            Layer::Activation(_) => LayerKind::Activation,
            Layer::Dropout { .. } => LayerKind::Dropout,
            Layer::ChannelNorm(_) => LayerKind::ChannelNorm,
        }
    }

    pub fn is_prunable(&self) -> bool {
        self.kind().role() == LayerRole::Prunable
    }

    /// Output width of a prunable layer.
    pub fn filters(&self) -> Option<usize> {
        match self {
            Layer::Conv2D(c) => Some(c.filters()),
            Layer::Dense(d) => Some(d.units()),
            _ => None,
        }
    }

    /// Parameter tensors in serialization order.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv2D(c) => vec![&c.weights, &c.bias],
            Layer::Dense(d) => vec![&d.weights, &d.bias],
            Layer::ChannelNorm(n) => vec![&n.gamma, &n.beta, &n.running_mean, &n.running_var],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv2D(c) => vec![&mut c.weights, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weights, &mut d.bias],
            Layer::ChannelNorm(n) => vec![
                &mut n.gamma,
                &mut n.beta,
                &mut n.running_mean,
                &mut n.running_var,
            ],
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    fn cast<U: Real>(&self) -> Layer<U> {
        match self {
            Layer::Conv2D(c) => Layer::Conv2D(Conv2D {
                weights: c.weights.cast(),
                bias: c.bias.cast(),
                padding: c.padding,
                activation: c.activation,
            }),
            Layer::Dense(d) => Layer::Dense(Dense {
                weights: d.weights.cast(),
                bias: d.bias.cast(),
                activation: d.activation,
            }),
            Layer::MaxPool2D => Layer::MaxPool2D,
            Layer::Flatten => Layer::Flatten,
            Layer::Activation(a) => Layer::Activation(*a),
            Layer::Dropout { rate } => Layer::Dropout { rate: *rate },
            Layer::ChannelNorm(n) => Layer::ChannelNorm(ChannelNorm {
                gamma: n.gamma.cast(),
                beta: n.beta.cast(),
                running_mean: n.running_mean.cast(),
                running_var: n.running_var.cast(),
                epsilon: n.epsilon,
                momentum: n.momentum,
            }),
        }
    }
}

/// Shape of the activation between two layers, excluding the batch axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureShape {
    Spatial {
        rows: usize,
        cols: usize,
        channels: usize,
    },
    Flat {
        features: usize,
    },
}

impl FeatureShape {
    pub fn numel(&self) -> usize {
        match *self {
            FeatureShape::Spatial {
                rows,
                cols,
                channels,
            } => rows * cols * channels,
            FeatureShape::Flat { features } => features,
        }
    }

    /// Size of the last axis: channels for maps, features for vectors.
    pub fn channels(&self) -> usize {
        match *self {
            FeatureShape::Spatial { channels, .. } => channels,
            FeatureShape::Flat { features } => features,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            FeatureShape::Spatial {
                rows,
                cols,
                channels,
            } => vec![rows, cols, channels],
            FeatureShape::Flat { features } => vec![features],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T = f32> {
    input_shape: Shape,
    layers: Vec<Layer<T>>,
}

impl<T: Real> Model<T> {
    /// Builds a model and checks that shapes line up end to end.
    pub fn new(input_shape: impl Into<Vec<usize>>, layers: Vec<Layer<T>>) -> Result<Self> {
        let input_shape = Shape::new(input_shape)?;
        if input_shape.rank() != 3 {
            return Err(Error::Shape(format!(
                "input shape must be (rows, cols, channels), got {:?}",
                input_shape.dims()
            )));
        }
        let model = Model {
            input_shape,
            layers,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn input_shape(&self) -> &Shape {
        &self.input_shape
    }

    pub fn input_feature_shape(&self) -> FeatureShape {
        let d = self.input_shape.dims();
        FeatureShape::Spatial {
            rows: d[0],
            cols: d[1],
            channels: d[2],
        }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Mutable access to layers. Callers that change parameter shapes must
    /// keep the model consistent; [`Model::validate`] rechecks it.
    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn validate(&self) -> Result<()> {
        self.infer_shapes()?;
        if self.last_prunable().is_none() {
            return Err(Error::Shape("model has no conv or dense layer".into()));
        }
        Ok(())
    }

    /// Feature shapes at every layer boundary: `[input, after layer 0, ...]`.
    pub fn infer_shapes(&self) -> Result<Vec<FeatureShape>> {
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut current = self.input_feature_shape();
        shapes.push(current);
        for (i, layer) in self.layers.iter().enumerate() {
            current = layer_output_shape(i, layer, current)?;
            shapes.push(current);
        }
        Ok(shapes)
    }

    /// Number of output features (class count for classifiers).
    pub fn output_width(&self) -> Result<usize> {
        Ok(self.infer_shapes()?.last().expect("input shape").numel())
    }

    pub fn prunable_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_prunable())
            .map(|(i, _)| i)
            .collect()
    }

    /// The classifier head: the final conv/dense layer.
    pub fn last_prunable(&self) -> Option<usize> {
        self.layers.iter().rposition(|l| l.is_prunable())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    /// Bitwise equality of structure and every parameter.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape
            && self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                same_metadata(a, b)
                    && a.params()
                        .iter()
                        .zip(b.params())
                        .all(|(x, y)| x.bitwise_eq(y))
            })
    }

    /// The `D×H` filter matrix of a prunable layer; column `h` holds the
    /// weights of filter `h` (bias excluded).
    pub fn filter_matrix(&self, layer: usize) -> Result<Tensor<T>> {
        let l = self
            .layers
            .get(layer)
            .ok_or_else(|| Error::Index(format!("layer {layer} out of range")))?;
        filter_matrix(l).map_err(|e| match e {
            Error::Kind { kind, .. } => Error::Kind { layer, kind },
            other => other,
        })
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            input_shape: self.input_shape.clone(),
            layers: self.layers.iter().map(Layer::cast).collect(),
        }
    }
}

fn same_metadata<T: Real>(a: &Layer<T>, b: &Layer<T>) -> bool {
    match (a, b) {
        (Layer::Conv2D(x), Layer::Conv2D(y)) => {
            x.padding == y.padding && x.activation == y.activation
        }
        (Layer::Dense(x), Layer::Dense(y)) => x.activation == y.activation,
        (Layer::Activation(x), Layer::Activation(y)) => x == y,
        (Layer::Dropout { rate: x }, Layer::Dropout { rate: y }) => x.to_bits() == y.to_bits(),
        (Layer::ChannelNorm(x), Layer::ChannelNorm(y)) => {
            x.epsilon.to_bits() == y.epsilon.to_bits()
                && x.momentum.to_bits() == y.momentum.to_bits()
        }
        (Layer::MaxPool2D, Layer::MaxPool2D) | (Layer::Flatten, Layer::Flatten) => true,
        _ => false,
    }
}

/// `D×H` view of a prunable layer's weights, with `D = k1·k2·I` for conv
/// and `D = I` for dense.
pub fn filter_matrix<T: Real>(layer: &Layer<T>) -> Result<Tensor<T>> {
    match layer {
        Layer::Conv2D(c) => {
            let (d, h) = c.weights.matrix_dims()?;
            c.weights.clone().reshape([d, h])
        }
        Layer::Dense(d) => Ok(d.weights.clone()),
        other => Err(Error::Kind {
            layer: usize::MAX,
            kind: other.kind().name(),
        }),
    }
}

/// Positions in the flattened vector that originate from `removed_channels`
/// of a channels-last map of shape `shape`, in increasing order.
pub fn flatten_index_map(shape: FeatureShape, removed_channels: &[usize]) -> Result<Vec<usize>> {
    let channels = shape.channels();
    if let Some(&bad) = removed_channels.iter().find(|&&c| c >= channels) {
        return Err(Error::Index(format!(
            "channel {bad} out of range for {channels} channels"
        )));
    }
    let mut sorted = removed_channels.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let positions = match shape {
        FeatureShape::Flat { .. } => 1,
        FeatureShape::Spatial { rows, cols, .. } => rows * cols,
    };
    let mut out = Vec::with_capacity(positions * sorted.len());
    for p in 0..positions {
        out.extend(sorted.iter().map(|&c| p * channels + c));
    }
    Ok(out)
}

fn layer_output_shape<T: Real>(
    index: usize,
    layer: &Layer<T>,
    input: FeatureShape,
) -> Result<FeatureShape> {
    let err = |message: String| Error::LayerShape {
        layer: index,
        message,
    };
    match layer {
        Layer::Conv2D(c) => {
            if c.weights.dims().len() != 4 {
                return Err(err(format!(
                    "conv weights must be rank 4, got {:?}",
                    c.weights.dims()
                )));
            }
            if c.bias.dims() != [c.filters()] {
                return Err(err(format!(
                    "bias {:?} does not match {} filters",
                    c.bias.dims(),
                    c.filters()
                )));
            }
            let FeatureShape::Spatial {
                rows,
                cols,
                channels,
            } = input
            else {
                return Err(err("conv2d needs a spatial input".into()));
            };
            if channels != c.in_channels() {
                return Err(err(format!(
                    "expects {} input channels, got {channels}",
                    c.in_channels()
                )));
            }
            let (k1, k2) = c.kernel();
            let (rows, cols) = match c.padding {
                Padding::Same => (rows, cols),
                Padding::Valid => {
                    if k1 > rows || k2 > cols {
                        return Err(err(format!(
                            "kernel {k1}x{k2} larger than input {rows}x{cols}"
                        )));
                    }
                    (rows - k1 + 1, cols - k2 + 1)
                }
            };
            Ok(FeatureShape::Spatial {
                rows,
                cols,
                channels: c.filters(),
            })
        }
        Layer::Dense(d) => {
            if d.weights.dims().len() != 2 {
                return Err(err(format!(
                    "dense weights must be rank 2, got {:?}",
                    d.weights.dims()
                )));
            }
            if d.bias.dims() != [d.units()] {
                return Err(err(format!(
                    "bias {:?} does not match {} units",
                    d.bias.dims(),
                    d.units()
                )));
            }
            let FeatureShape::Flat { features } = input else {
                return Err(err(
                    "dense needs a flat input; insert a flatten layer".into()
                ));
            };
            if features != d.inputs() {
                return Err(err(format!(
                    "expects {} inputs, got {features}",
                    d.inputs()
                )));
            }
            Ok(FeatureShape::Flat {
                features: d.units(),
            })
        }
        Layer::MaxPool2D => match input {
            FeatureShape::Spatial {
                rows,
                cols,
                channels,
            } if rows >= 2 && cols >= 2 => Ok(FeatureShape::Spatial {
                rows: rows / 2,
                cols: cols / 2,
                channels,
            }),
            other => Err(err(format!(
                "max pooling needs a spatial map of at least 2x2, got {other:?}"
            ))),
        },
        Layer::Flatten => Ok(FeatureShape::Flat {
            features: input.numel(),
        }),
        Layer::Activation(_) => Ok(input),
        Layer::Dropout { rate } => {
            if !(0.0..1.0).contains(rate) {
                return Err(err(format!("dropout rate {rate} outside [0, 1)")));
            }
            Ok(input)
        }
        Layer::ChannelNorm(n) => {
            let c = n.channels();
            for t in [&n.gamma, &n.beta, &n.running_mean, &n.running_var] {
                if t.dims() != [c] {
                    return Err(err("channel norm vectors must share one length".into()));
                }
            }
            if n.running_var.data().iter().any(|v| *v < T::zero()) {
                return Err(err("negative running variance".into()));
            }
            if !(n.epsilon > 0.0) {
                return Err(err(format!("epsilon must be positive, got {}", n.epsilon)));
            }
            if c != input.channels() {
                return Err(err(format!(
                    "normalizes {c} channels, input has {}",
                    input.channels()
                )));
            }
            Ok(input)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn conv(k: usize, i: usize, h: usize, padding: Padding) -> Layer {
        Layer::Conv2D(Conv2D {
            weights: Tensor::zeros([k, k, i, h]).unwrap(),
            bias: Tensor::zeros([h]).unwrap(),
            padding,
            activation: Activation::Relu,
        })
    }

    fn dense(i: usize, h: usize) -> Layer {
        Layer::Dense(Dense {
            weights: Tensor::zeros([i, h]).unwrap(),
            bias: Tensor::zeros([h]).unwrap(),
            activation: Activation::Softmax,
        })
    }

    #[test]
    fn same_padding_preserves_spatial_dims() {
        let m = Model::new([28, 28, 1], vec![conv(3, 1, 8, Padding::Same)]).unwrap();
        assert_eq!(
            m.infer_shapes().unwrap()[1],
            FeatureShape::Spatial {
                rows: 28,
                cols: 28,
                channels: 8
            }
        );
    }

    #[test]
    fn pool_then_flatten() {
        let m = Model::new(
            [28, 28, 1],
            vec![
                conv(3, 1, 8, Padding::Same),
                Layer::MaxPool2D,
                Layer::Flatten,
                dense(1568, 10),
            ],
        )
        .unwrap();
        let s = m.infer_shapes().unwrap();
        assert_eq!(
            s[2],
            FeatureShape::Spatial {
                rows: 14,
                cols: 14,
                channels: 8
            }
        );
        assert_eq!(s[3], FeatureShape::Flat { features: 1568 });
        assert_eq!(s[4], FeatureShape::Flat { features: 10 });
        assert_eq!(m.output_width().unwrap(), 10);
    }

    #[test]
    fn valid_padding_shrinks() {
        let m = Model::new([32, 32, 3], vec![conv(5, 3, 6, Padding::Valid)]).unwrap();
        assert_eq!(
            m.infer_shapes().unwrap()[1],
            FeatureShape::Spatial {
                rows: 28,
                cols: 28,
                channels: 6
            }
        );
    }

    #[test]
    fn mismatches_name_the_layer() {
        let e = Model::new(
            [28, 28, 1],
            vec![conv(3, 1, 8, Padding::Same), conv(3, 4, 8, Padding::Same)],
        )
        .unwrap_err();
        assert!(matches!(e, Error::LayerShape { layer: 1, .. }), "{e}");
        let e = Model::new([4, 4, 1], vec![dense(16, 2)]).unwrap_err();
        assert!(matches!(e, Error::LayerShape { layer: 0, .. }));
        let e = Model::new([4, 4, 1], vec![Layer::<f32>::Flatten]).unwrap_err();
        assert!(matches!(e, Error::Shape(_)));
    }

    #[test]
    fn taxonomy_is_total() {
        use LayerKind::*;
        let all = [
            Conv2D,
            Dense,
            MaxPool2D,
            Flatten,
            Activation,
            Dropout,
            ChannelNorm,
        ];
        let prunable: Vec<_> = all
            .iter()
            .filter(|k| k.role() == LayerRole::Prunable)
            .collect();
        let shaping: Vec<_> = all
            .iter()
            .filter(|k| k.role() == LayerRole::ShapeTransforming)
            .collect();
        assert_eq!(prunable, vec![&Conv2D, &Dense]);
        assert_eq!(shaping, vec![&Flatten]);
    }

    #[test]
    fn dense_filter_matrix_is_weights() {
        let w = Tensor::from_vec([4, 2], (0..8).map(|v| v as f32).collect()).unwrap();
        let layer = Layer::Dense(Dense {
            weights: w.clone(),
            bias: Tensor::zeros([2]).unwrap(),
            activation: Activation::None,
        });
        assert!(filter_matrix(&layer).unwrap().bitwise_eq(&w));
        assert!(matches!(
            filter_matrix(&Layer::<f32>::Flatten),
            Err(Error::Kind { .. })
        ));
    }

    #[test]
    fn conv_filter_matrix_columns() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        let w =
            Tensor::from_vec([3, 3, 2, 5], (0..90).map(|_| rng.gen::<f32>()).collect()).unwrap();
        let layer = Layer::Conv2D(Conv2D {
            weights: w.clone(),
            bias: Tensor::zeros([5]).unwrap(),
            padding: Padding::Same,
            activation: Activation::None,
        });
        let fm = filter_matrix(&layer).unwrap();
        assert_eq!(fm.dims(), &[18, 5]);
        let mut col3 = Vec::new();
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..2 {
                    col3.push(w.get(&[a, b, c, 3]).unwrap());
                }
            }
        }
        let got: Vec<f32> = (0..18).map(|r| fm.get(&[r, 3]).unwrap()).collect();
        assert_eq!(got, col3);
        // round trip back to the kernel layout
        assert!(fm.reshape([3, 3, 2, 5]).unwrap().bitwise_eq(&w));
    }

    #[test]
    fn flatten_map_examples() {
        let s = |r, c, ch| FeatureShape::Spatial {
            rows: r,
            cols: c,
            channels: ch,
        };
        assert_eq!(flatten_index_map(s(1, 1, 3), &[1]).unwrap(), vec![1]);
        assert_eq!(
            flatten_index_map(s(2, 2, 2), &[0]).unwrap(),
            vec![0, 2, 4, 6]
        );
        assert!(matches!(
            flatten_index_map(s(2, 2, 2), &[2]),
            Err(Error::Index(_))
        ));
    }

    #[test]
    fn flatten_map_matches_indicator_oracle() {
        let (rows, cols, channels) = (3, 3, 4);
        let removed = [1, 3];
        // channel-indicator tensor flattened in row-major order
        let indicator = Tensor::from_vec(
            [rows, cols, channels],
            (0..rows * cols * channels)
                .map(|i| {
                    if removed.contains(&(i % channels)) {
                        1.0f32
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
        .unwrap();
        let want: Vec<usize> = indicator
            .data()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        let got = flatten_index_map(
            FeatureShape::Spatial {
                rows,
                cols,
                channels,
            },
            &removed,
        )
        .unwrap();
        assert_eq!(got, want);
        assert_eq!(got.len(), rows * cols * removed.len());
    }
}
