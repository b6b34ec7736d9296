//! Random VGG-style models for the property suites.

use cprune::model::{Activation, ArchSpec, LayerSpec, Padding};
use cprune::{Layer, Model, Tensor};
use rand::Rng;

pub struct Limits {
    pub side: usize,
    pub channels: usize,
    pub filters: usize,
    pub norm: bool,
}

pub const SMALL: Limits = Limits {
    side: 9,
    channels: 3,
    filters: 6,
    norm: true,
};

fn activation(rng: &mut impl Rng) -> Activation {
    if rng.gen_bool(0.7) {
        Activation::Relu
    } else {
        Activation::None
    }
}

pub fn random_spec(rng: &mut impl Rng, lim: &Limits) -> ArchSpec {
    let (mut rows, mut cols) = (rng.gen_range(3..=lim.side), rng.gen_range(3..=lim.side));
    let input_shape = [rows, cols, rng.gen_range(1..=lim.channels)];
    let mut layers = Vec::new();
    for _ in 0..rng.gen_range(1..=3) {
        let kernel = [
            rng.gen_range(1..=3.min(rows)),
            rng.gen_range(1..=3.min(cols)),
        ];
        let padding = if rng.gen_bool(0.5) {
            Padding::Same
        } else {
            Padding::Valid
        };
        if padding == Padding::Valid {
            rows = rows + 1 - kernel[0];
            cols = cols + 1 - kernel[1];
        }
        layers.push(LayerSpec::Conv2d {
            filters: rng.gen_range(1..=lim.filters),
            kernel,
            padding,
            activation: activation(rng),
        });
        if lim.norm && rng.gen_bool(0.4) {
            layers.push(LayerSpec::ChannelNorm {
                epsilon: 1e-3,
                momentum: 0.9,
            });
        }
        if rng.gen_bool(0.2) {
            layers.push(LayerSpec::Activation {
                function: Activation::Relu,
            });
        }
        if rows >= 2 && cols >= 2 && rng.gen_bool(0.5) {
            layers.push(LayerSpec::MaxPool2d);
            rows /= 2;
            cols /= 2;
        }
        if rng.gen_bool(0.2) {
            layers.push(LayerSpec::Dropout { rate: 0.3 });
        }
    }
    layers.push(LayerSpec::Flatten);
    for _ in 0..rng.gen_range(0..=2) {
        layers.push(LayerSpec::Dense {
            units: rng.gen_range(1..=lim.filters),
            activation: activation(rng),
        });
        if rng.gen_bool(0.2) {
            layers.push(LayerSpec::Dropout { rate: 0.5 });
        }
    }
    layers.push(LayerSpec::Dense {
        units: rng.gen_range(2..=4),
        activation: Activation::Softmax,
    });
    ArchSpec {
        input_shape,
        layers,
    }
}

fn fill(t: &mut Tensor, rng: &mut impl Rng, lo: f32, hi: f32) {
    for v in t.data_mut() {
        *v = rng.gen_range(lo..hi);
    }
}

/// Built model with nonzero biases and non-identity normalization state.
pub fn random_model(rng: &mut impl Rng, lim: &Limits) -> Model {
    let spec = random_spec(rng, lim);
    let mut model = spec.build(rng.gen()).expect("generated spec builds");
    for layer in model.layers_mut() {
        match layer {
            Layer::Conv2D(c) => fill(&mut c.bias, rng, -0.3, 0.3),
            Layer::Dense(d) => fill(&mut d.bias, rng, -0.3, 0.3),
            Layer::ChannelNorm(n) => {
                fill(&mut n.gamma, rng, 0.5, 1.5);
                fill(&mut n.beta, rng, -0.5, 0.5);
                fill(&mut n.running_mean, rng, -0.5, 0.5);
                fill(&mut n.running_var, rng, 0.5, 2.0);
            }
            _ => {}
        }
    }
    model
}

pub fn random_inputs(rng: &mut impl Rng, model: &Model, n: usize) -> Tensor {
    let mut dims = vec![n];
    dims.extend_from_slice(model.input_shape().dims());
    let len = dims.iter().product();
    Tensor::from_vec(dims, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}
