//! Forward inference, cross-entropy loss, reverse-mode gradients and
//! minibatch SGD with momentum.
//!
//! Training requires the model output to come from a softmax (as the
//! activation of the final conv/dense layer or a trailing softmax activation
//! layer); the loss gradient is then taken with respect to the logits.

mod ops;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Activation, FeatureShape, Layer, Model};
use crate::scalar::Real;
use crate::tensor::Tensor;

use ops::ConvGeom;

/// Images `(N, rows, cols, channels)` with one class index per image.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T = f32> {
    pub inputs: Tensor<T>,
    pub labels: Vec<usize>,
}

impl<T: Real> Batch<T> {
    /// Copies the samples at `indices` out of a full image tensor.
    pub fn gather(images: &Tensor<T>, labels: &[usize], indices: &[usize]) -> Result<Self> {
        let dims = images.dims();
        let per = images.len() / dims[0];
        let mut data = Vec::with_capacity(per * indices.len());
        let mut picked = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= dims[0] {
                return Err(Error::Index(format!("sample {i} of {}", dims[0])));
            }
            data.extend_from_slice(&images.data()[i * per..(i + 1) * per]);
            picked.push(labels[i]);
        }
        let mut batch_dims = dims.to_vec();
        batch_dims[0] = indices.len();
        Ok(Batch {
            inputs: Tensor::from_vec(batch_dims, data)?,
            labels: picked,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Whether a forward pass uses training behaviour: per-batch normalization
/// statistics, and dropout when enabled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Inference,
    Training { dropout: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub top1_accuracy: f64,
    pub mean_loss: f64,
    pub correct: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub rng_seed: u64,
    pub dropout: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 5,
            batch_size: 64,
            rng_seed: 0,
            dropout: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

struct Act<T> {
    data: Vec<T>,
    batch: usize,
    shape: FeatureShape,
}

impl<T> Act<T> {
    fn width(&self) -> usize {
        match self.shape {
            FeatureShape::Spatial { channels, .. } => channels,
            FeatureShape::Flat { features } => features,
        }
    }
}

enum Cache<T> {
    Conv {
        geom: ConvGeom,
        cols: Vec<T>,
        out: Vec<T>,
    },
    Dense {
        input: Vec<T>,
        out: Vec<T>,
    },
    Pool {
        arg: Vec<u32>,
        input_len: usize,
    },
    Reshape,
    Activation {
        out: Vec<T>,
        width: usize,
    },
    Dropout {
        mask: Option<Vec<T>>,
    },
    Norm {
        x_hat: Vec<T>,
        inv_std: Vec<T>,
        /// Batch statistics when they were used (training phase).
        batch_stats: Option<(Vec<T>, Vec<T>)>,
    },
}

struct Forward<T> {
    output: Act<T>,
    caches: Vec<Cache<T>>,
    /// Pre-softmax values of the final layer when it ends in a softmax.
    logits: Option<Vec<T>>,
}

fn check_input<T: Real>(model: &Model<T>, inputs: &Tensor<T>) -> Result<usize> {
    let dims = inputs.dims();
    if dims.len() != 4 || &dims[1..] != model.input_shape().dims() {
        return Err(Error::Shape(format!(
            "inputs {:?} do not match (N, {:?})",
            dims,
            model.input_shape().dims()
        )));
    }
    Ok(dims[0])
}

/// Index of the layer whose softmax produces the model output, if any.
fn terminal_softmax<T: Real>(model: &Model<T>) -> Option<usize> {
    let last = model.layers().len().checked_sub(1)?;
    match &model.layers()[last] {
        Layer::Conv2D(c) if c.activation == Activation::Softmax => Some(last),
        Layer::Dense(d) if d.activation == Activation::Softmax => Some(last),
        Layer::Activation(Activation::Softmax) => Some(last),
        _ => None,
    }
}

fn run_forward<T: Real>(
    model: &Model<T>,
    inputs: &Tensor<T>,
    phase: Phase,
    mut rng: Option<&mut Xoshiro256PlusPlus>,
    keep: bool,
) -> Result<Forward<T>> {
    let batch = check_input(model, inputs)?;
    let softmax_at = terminal_softmax(model);
    let mut act = Act {
        data: inputs.data().to_vec(),
        batch,
        shape: model.input_feature_shape(),
    };
    let mut caches = Vec::with_capacity(if keep { model.layers().len() } else { 0 });
    let mut logits = None;
    for (index, layer) in model.layers().iter().enumerate() {
        let is_softmax_end = softmax_at == Some(index);
        let (next, cache) = match layer {
            Layer::Conv2D(conv) => {
                let FeatureShape::Spatial {
                    rows,
                    cols,
                    channels,
                } = act.shape
                else {
                    return Err(Error::LayerShape {
                        layer: index,
                        message: "conv2d on flat features".into(),
                    });
                };
                let geom =
                    ConvGeom::new(batch, (rows, cols, channels), conv.kernel(), conv.padding);
                let patches = ops::im2col(&geom, &act.data);
                let mut z = ops::affine(
                    &patches,
                    conv.weights.data(),
                    conv.bias.data(),
                    geom.patches(),
                    geom.patch_len(),
                );
                if is_softmax_end && keep {
                    logits = Some(z.clone());
                }
                ops::activate(conv.activation, &mut z, conv.filters());
                let shape = FeatureShape::Spatial {
                    rows: geom.out_rows,
                    cols: geom.out_cols,
                    channels: conv.filters(),
                };
                let cache = keep.then(|| Cache::Conv {
                    geom,
                    cols: patches,
                    out: z.clone(),
                });
                (
                    Act {
                        data: z,
                        batch,
                        shape,
                    },
                    cache,
                )
            }
            Layer::Dense(dense) => {
                let mut z = ops::affine(
                    &act.data,
                    dense.weights.data(),
                    dense.bias.data(),
                    batch,
                    dense.inputs(),
                );
                if is_softmax_end && keep {
                    logits = Some(z.clone());
                }
                ops::activate(dense.activation, &mut z, dense.units());
                let cache = keep.then(|| Cache::Dense {
                    input: std::mem::take(&mut act.data),
                    out: z.clone(),
                });
                let shape = FeatureShape::Flat {
                    features: dense.units(),
                };
                (
                    Act {
                        data: z,
                        batch,
                        shape,
                    },
                    cache,
                )
            }
            Layer::MaxPool2D => {
                let FeatureShape::Spatial {
                    rows,
                    cols,
                    channels,
                } = act.shape
                else {
                    return Err(Error::LayerShape {
                        layer: index,
                        message: "pooling flat features".into(),
                    });
                };
                let (out, arg) = ops::maxpool(&act.data, batch, (rows, cols, channels));
                let cache = keep.then_some(Cache::Pool {
                    arg,
                    input_len: act.data.len(),
                });
                let shape = FeatureShape::Spatial {
                    rows: rows / 2,
                    cols: cols / 2,
                    channels,
                };
                (
                    Act {
                        data: out,
                        batch,
                        shape,
                    },
                    cache,
                )
            }
            Layer::Flatten => {
                let features = act.shape.numel();
                let cache = keep.then_some(Cache::Reshape);
                (
                    Act {
                        data: std::mem::take(&mut act.data),
                        batch,
                        shape: FeatureShape::Flat { features },
                    },
                    cache,
                )
            }
            Layer::Activation(a) => {
                let width = act.width();
                let mut data = std::mem::take(&mut act.data);
                if is_softmax_end && keep {
                    logits = Some(data.clone());
                }
                ops::activate(*a, &mut data, width);
                let cache = keep.then(|| Cache::Activation {
                    out: data.clone(),
                    width,
                });
                (
                    Act {
                        data,
                        batch,
                        shape: act.shape,
                    },
                    cache,
                )
            }
            Layer::Dropout { rate } => {
                let mut data = std::mem::take(&mut act.data);
                let mask = match phase {
                    Phase::Training { dropout: true } if *rate > 0.0 => {
                        let rng = rng.as_deref_mut().ok_or_else(|| {
                            Error::Config("dropout in training needs a random source".into())
                        })?;
                        let keep_p = 1.0 - *rate as f64;
                        let scale = T::lit(1.0 / keep_p);
                        let mask: Vec<T> = (0..data.len())
                            .map(|_| {
                                if rng.gen::<f64>() < keep_p {
                                    scale
                                } else {
                                    T::zero()
                                }
                            })
                            .collect();
                        for (v, m) in data.iter_mut().zip(&mask) {
                            *v *= *m;
                        }
                        Some(mask)
                    }
                    _ => None,
                };
                let cache = keep.then_some(Cache::Dropout { mask });
                (
                    Act {
                        data,
                        batch,
                        shape: act.shape,
                    },
                    cache,
                )
            }
            Layer::ChannelNorm(norm) => {
                let c = norm.channels();
                let mut data = std::mem::take(&mut act.data);
                let eps = T::lit(norm.epsilon as f64);
                let (mean, var, batch_stats) = match phase {
                    Phase::Inference => (
                        norm.running_mean.data().to_vec(),
                        norm.running_var.data().to_vec(),
                        false,
                    ),
                    Phase::Training { .. } => {
                        let (m, v) = channel_moments(&data, c);
                        (m, v, true)
                    }
                };
                let inv_std: Vec<T> = var.iter().map(|v| T::one() / (*v + eps).sqrt()).collect();
                let mut x_hat = if keep {
                    Vec::with_capacity(data.len())
                } else {
                    Vec::new()
                };
                for row in data.chunks_exact_mut(c) {
                    for k in 0..c {
                        let xh = (row[k] - mean[k]) * inv_std[k];
                        if keep {
                            x_hat.push(xh);
                        }
                        row[k] = norm.gamma.data()[k] * xh + norm.beta.data()[k];
                    }
                }
                let cache = keep.then(|| Cache::Norm {
                    x_hat,
                    inv_std,
                    batch_stats: batch_stats.then(|| (mean.clone(), var.clone())),
                });
                (
                    Act {
                        data,
                        batch,
                        shape: act.shape,
                    },
                    cache,
                )
            }
        };
        if !next.data.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerics(format!(
                "non-finite activation after layer {index} ({})",
                layer.kind().name()
            )));
        }
        if let Some(cache) = cache {
            caches.push(cache);
        }
        act = next;
    }
    Ok(Forward {
        output: act,
        caches,
        logits,
    })
}

/// Per-channel population mean and variance over all leading positions.
fn channel_moments<T: Real>(data: &[T], c: usize) -> (Vec<T>, Vec<T>) {
    let groups = data.len() / c;
    let n = T::from_usize(groups).expect("count");
    let mut mean = vec![T::zero(); c];
    for row in data.chunks_exact(c) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += *v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![T::zero(); c];
    for row in data.chunks_exact(c) {
        for k in 0..c {
            let d = row[k] - mean[k];
            var[k] += d * d;
        }
    }
    for v in var.iter_mut() {
        *v /= n;
    }
    (mean, var)
}

/// Inference forward pass: `(N, rows, cols, channels)` in, `(N, outputs)`
/// out. Dropout is inactive and normalization uses running statistics.
pub fn forward<T: Real>(model: &Model<T>, inputs: &Tensor<T>) -> Result<Tensor<T>> {
    let fwd = run_forward(model, inputs, Phase::Inference, None, false)?;
    let n = fwd.output.batch;
    let width = fwd.output.data.len() / n;
    Tensor::from_vec([n, width], fwd.output.data)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

fn check_labels(labels: &[usize], n: usize, width: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} samples",
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= width) {
        return Err(Error::Index(format!("label {bad} with {width} outputs")));
    }
    Ok(())
}

/// Top-1 accuracy and mean cross-entropy over every sample in `batches`.
pub fn evaluate<T: Real>(
    model: &Model<T>,
    batches: impl IntoIterator<Item = Batch<T>>,
) -> Result<Metric> {
    let mut correct = 0;
    let mut total = 0;
    let mut loss_sum = 0.0f64;
    for batch in batches {
        let probs = forward(model, &batch.inputs)?;
        let width = probs.dims()[1];
        check_labels(&batch.labels, probs.dims()[0], width)?;
        for (row, &label) in probs.data().chunks_exact(width).zip(&batch.labels) {
            if argmax(row) == label {
                correct += 1;
            }
            let p = row[label].as_f64().max(f64::MIN_POSITIVE);
            loss_sum -= p.ln();
        }
        total += batch.labels.len();
    }
    if total == 0 {
        return Err(Error::Config("evaluation over an empty stream".into()));
    }
    Ok(Metric {
        top1_accuracy: correct as f64 / total as f64,
        mean_loss: loss_sum / total as f64,
        correct,
        total,
    })
}

/// Evaluates a whole image tensor in chunks of `batch_size`.
pub fn evaluate_images<T: Real>(
    model: &Model<T>,
    images: &Tensor<T>,
    labels: &[usize],
    batch_size: usize,
) -> Result<Metric> {
    let n = images.dims()[0];
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} images",
            labels.len()
        )));
    }
    let batch_size = batch_size.max(1);
    let batches = (0..n)
        .step_by(batch_size)
        .map(|start| {
            let idx: Vec<usize> = (start..(start + batch_size).min(n)).collect();
            Batch::gather(images, labels, &idx)
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate(model, batches)
}

/// Loss, gradients and side results of one training step.
pub struct StepResult<T> {
    pub loss: f64,
    pub correct: usize,
    /// One gradient per tensor of [`Model::params`], zero for running
    /// statistics.
    pub grads: Vec<Tensor<T>>,
    /// `(layer, batch mean, batch variance)` for every normalization layer
    /// that used batch statistics.
    pub norm_stats: Vec<(usize, Vec<T>, Vec<T>)>,
}

fn softmax_loss<T: Real>(logits: &[T], width: usize, labels: &[usize]) -> (f64, Vec<T>, usize) {
    let n = labels.len();
    let scale = T::one() / T::from_usize(n).expect("count");
    let mut grad = logits.to_vec();
    let mut loss = 0.0f64;
    let mut correct = 0;
    for ((row, g), &label) in logits
        .chunks_exact(width)
        .zip(grad.chunks_exact_mut(width))
        .zip(labels)
    {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let sum: T = row.iter().map(|v| (*v - max).exp()).sum();
        let lse = max + sum.ln();
        loss += (lse - row[label]).as_f64();
        if argmax(row) == label {
            correct += 1;
        }
        for (gi, zi) in g.iter_mut().zip(row) {
            *gi = (*zi - lse).exp() * scale;
        }
        g[label] -= scale;
    }
    (loss / n as f64, grad, correct)
}

/// Mean cross-entropy of `batch` and its gradient with respect to every
/// parameter.
pub fn gradients<T: Real>(
    model: &Model<T>,
    batch: &Batch<T>,
    phase: Phase,
    rng: Option<&mut Xoshiro256PlusPlus>,
) -> Result<StepResult<T>> {
    let softmax_at = terminal_softmax(model)
        .ok_or_else(|| Error::Config("training needs a model that ends in a softmax".into()))?;
    let fwd = run_forward(model, &batch.inputs, phase, rng, true)?;
    let n = fwd.output.batch;
    let width = fwd.output.data.len() / n;
    check_labels(&batch.labels, n, width)?;
    if fwd.output.width() != width {
        return Err(Error::Shape(format!(
            "softmax over {} values but {width} outputs per sample",
            fwd.output.width()
        )));
    }
    let logits = fwd.logits.expect("terminal softmax keeps logits");
    let (loss, mut grad, correct) = softmax_loss(&logits, width, &batch.labels);

    let layers = model.layers();
    let first_param = layers.iter().position(|l| !l.params().is_empty());
    let mut per_layer: Vec<Vec<Tensor<T>>> = vec![Vec::new(); layers.len()];
    let mut norm_stats = Vec::new();
    for (index, (layer, cache)) in layers.iter().zip(fwd.caches).enumerate().rev() {
        let need_dx = first_param.is_some_and(|f| index > f);
        let fused = index == softmax_at;
        match (layer, cache) {
            (Layer::Conv2D(conv), Cache::Conv { geom, cols, out }) => {
                if !fused {
                    ops::activate_backward(conv.activation, &out, &mut grad, conv.filters());
                }
                let (dw, db, dcols) = ops::affine_backward(
                    &cols,
                    conv.weights.data(),
                    &grad,
                    geom.patches(),
                    geom.patch_len(),
                    conv.filters(),
                    need_dx,
                );
                per_layer[index] = vec![
                    Tensor::from_vec(conv.weights.dims().to_vec(), dw)?,
                    Tensor::from_vec(conv.bias.dims().to_vec(), db)?,
                ];
                grad = dcols.map(|d| ops::col2im(&geom, &d)).unwrap_or_default();
            }
            (Layer::Dense(dense), Cache::Dense { input, out }) => {
                if !fused {
                    ops::activate_backward(dense.activation, &out, &mut grad, dense.units());
                }
                let (dw, db, dx) = ops::affine_backward(
                    &input,
                    dense.weights.data(),
                    &grad,
                    n,
                    dense.inputs(),
                    dense.units(),
                    need_dx,
                );
                per_layer[index] = vec![
                    Tensor::from_vec(dense.weights.dims().to_vec(), dw)?,
                    Tensor::from_vec(dense.bias.dims().to_vec(), db)?,
                ];
                grad = dx.unwrap_or_default();
            }
            (Layer::MaxPool2D, Cache::Pool { arg, input_len }) => {
                grad = ops::maxpool_backward(&grad, &arg, input_len);
            }
            (Layer::Flatten, Cache::Reshape) => {}
            (Layer::Activation(a), Cache::Activation { out, width }) => {
                if !fused {
                    ops::activate_backward(*a, &out, &mut grad, width);
                }
            }
            (Layer::Dropout { .. }, Cache::Dropout { mask }) => {
                if let Some(mask) = mask {
                    for (g, m) in grad.iter_mut().zip(&mask) {
                        *g *= *m;
                    }
                }
            }
            (
                Layer::ChannelNorm(norm),
                Cache::Norm {
                    x_hat,
                    inv_std,
                    batch_stats,
                },
            ) => {
                let c = norm.channels();
                let gamma = norm.gamma.data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for (g, xh) in grad.chunks_exact(c).zip(x_hat.chunks_exact(c)) {
                    for k in 0..c {
                        dgamma[k] += g[k] * xh[k];
                        dbeta[k] += g[k];
                    }
                }
                match batch_stats {
                    Some((mean, var)) => {
                        let m = T::from_usize(grad.len() / c).expect("count");
                        for (g, xh) in grad.chunks_exact_mut(c).zip(x_hat.chunks_exact(c)) {
                            for k in 0..c {
                                // d x = γ σ⁻¹ (g − mean(g) − x̂ · mean(g x̂))
                                g[k] = gamma[k]
                                    * inv_std[k]
                                    * (g[k] - dbeta[k] / m - xh[k] * dgamma[k] / m);
                            }
                        }
                        norm_stats.push((index, mean, var));
                    }
                    None => {
                        for g in grad.chunks_exact_mut(c) {
                            for k in 0..c {
                                g[k] *= gamma[k] * inv_std[k];
                            }
                        }
                    }
                }
                per_layer[index] = vec![
                    Tensor::from_vec([c], dgamma)?,
                    Tensor::from_vec([c], dbeta)?,
                    Tensor::zeros([c])?,
                    Tensor::zeros([c])?,
                ];
            }
            _ => unreachable!("cache kinds follow layer kinds"),
        }
        if first_param == Some(index) {
            break;
        }
    }
    norm_stats.reverse();
    Ok(StepResult {
        loss,
        correct,
        grads: per_layer.into_iter().flatten().collect(),
        norm_stats,
    })
}

/// Mean cross-entropy of `batch` in training phase without dropout, on the same
/// numerical path as [`gradients`].
pub fn batch_loss<T: Real>(model: &Model<T>, batch: &Batch<T>) -> Result<f64> {
    terminal_softmax(model)
        .ok_or_else(|| Error::Config("loss needs a model that ends in a softmax".into()))?;
    let fwd = run_forward(
        model,
        &batch.inputs,
        Phase::Training { dropout: false },
        None,
        true,
    )?;
    let n = fwd.output.batch;
    let width = fwd.output.data.len() / n;
    check_labels(&batch.labels, n, width)?;
    let logits = fwd.logits.expect("terminal softmax keeps logits");
    Ok(softmax_loss(&logits, width, &batch.labels).0)
}

/// Which tensors of [`Model::params`] are updated by the optimizer.
pub fn trainable_mask<T: Real>(model: &Model<T>) -> Vec<bool> {
    model
        .layers()
        .iter()
        .flat_map(|l| match l {
            Layer::ChannelNorm(_) => vec![true, true, false, false],
            other => vec![true; other.params().len()],
        })
        .collect()
}

/// Minibatch SGD with momentum. Returns one training-set [`Metric`] per
/// epoch, accumulated over that epoch's batches.
pub fn train<T: Real>(
    model: &mut Model<T>,
    images: &Tensor<T>,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<Metric>> {
    train_with(model, images, labels, cfg, |_, _, _| Ok(()))
}

/// [`train`] with a callback after every epoch; an error from it stops
/// training.
pub fn train_with<T: Real>(
    model: &mut Model<T>,
    images: &Tensor<T>,
    labels: &[usize],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &Metric, &Model<T>) -> Result<()>,
) -> Result<Vec<Metric>> {
    cfg.validate()?;
    let n = check_input(model, images)?;
    if labels.len() != n || n == 0 {
        return Err(Error::Shape(format!(
            "{} labels for {n} images",
            labels.len()
        )));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.rng_seed);
    let trainable = trainable_mask(model);
    let mut velocity: Vec<Vec<T>> = model
        .params()
        .iter()
        .map(|t| vec![T::zero(); t.len()])
        .collect();
    let lr = T::lit(cfg.learning_rate);
    let mu = T::lit(cfg.momentum);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let phase = Phase::Training {
        dropout: cfg.dropout,
    };
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = Batch::gather(images, labels, chunk)?;
            let step = gradients(model, &batch, phase, Some(&mut rng)).map_err(|e| match e {
                Error::Numerics(m) => Error::Numerics(format!("epoch {epoch}, batch {b}: {m}")),
                other => other,
            })?;
            if !step.loss.is_finite() {
                return Err(Error::Numerics(format!(
                    "epoch {epoch}, batch {b}: loss is {}",
                    step.loss
                )));
            }
            loss_sum += step.loss * chunk.len() as f64;
            correct += step.correct;
            for (((param, grad), vel), &train) in model
                .params_mut()
                .into_iter()
                .zip(&step.grads)
                .zip(velocity.iter_mut())
                .zip(&trainable)
            {
                if !train {
                    continue;
                }
                for ((p, g), v) in param
                    .data_mut()
                    .iter_mut()
                    .zip(grad.data())
                    .zip(vel.iter_mut())
                {
                    *v = mu * *v - lr * *g;
                    *p += *v;
                }
            }
            for (layer, mean, var) in step.norm_stats {
                if let Layer::ChannelNorm(norm) = &mut model.layers_mut()[layer] {
                    let m = T::lit(norm.momentum as f64);
                    let one_m = T::one() - m;
                    for (r, b) in norm.running_mean.data_mut().iter_mut().zip(&mean) {
                        *r = m * *r + one_m * *b;
                    }
                    for (r, b) in norm.running_var.data_mut().iter_mut().zip(&var) {
                        *r = m * *r + one_m * *b;
                    }
                }
            }
        }
        let metric = Metric {
            top1_accuracy: correct as f64 / n as f64,
            mean_loss: loss_sum / n as f64,
            correct,
            total: n,
        };
        on_epoch(epoch, &metric, model)?;
        history.push(metric);
    }
    Ok(history)
}
