//! Forward-pass FLOPs: `2·I·H` per dense layer and `2·k1·k2·rh·rw·I·H` per
//! conv layer, where `(rh, rw)` are the conv's output spatial dims. Every
//! other layer counts zero; biases and activations are not counted.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{FeatureShape, Layer, LayerKind, Model, Padding};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerFlops {
    pub index: usize,
    pub kind: LayerKind,
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub layers: Vec<LayerFlops>,
    pub total: u64,
}

/// FLOPs of one layer given the feature shape entering it.
pub fn layer_flops<T: Real>(layer: &Layer<T>, input: FeatureShape) -> u64 {
    match layer {
        Layer::Conv2D(c) => {
            let FeatureShape::Spatial { rows, cols, .. } = input else {
                return 0;
            };
            let (k1, k2) = c.kernel();
            let (rh, rw) = match c.padding {
                Padding::Same => (rows, cols),
                Padding::Valid => (rows + 1 - k1, cols + 1 - k2),
            };
            [k1, k2, rh, rw, c.in_channels(), c.filters()]
                .iter()
                .fold(2u64, |acc, &v| acc * v as u64)
        }
        Layer::Dense(d) => 2 * d.inputs() as u64 * d.units() as u64,
        _ => 0,
    }
}

pub fn model_flops<T: Real>(model: &Model<T>) -> Result<FlopsReport> {
    let shapes = model.infer_shapes()?;
    let layers: Vec<LayerFlops> = model
        .layers()
        .iter()
        .zip(&shapes)
        .enumerate()
        .map(|(index, (layer, &input))| LayerFlops {
            index,
            kind: layer.kind(),
            flops: layer_flops(layer, input),
        })
        .collect();
    let total = layers.iter().map(|l| l.flops).sum();
    Ok(FlopsReport { layers, total })
}

/// `1 - after / before`.
pub fn reduction(before: u64, after: u64) -> f64 {
    if before == 0 {
        0.0
    } else {
        1.0 - after as f64 / before as f64
    }
}
