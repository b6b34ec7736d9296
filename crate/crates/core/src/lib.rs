//! Criterion-based structured filter pruning for sequential CNNs.
//!
//! A criterion scores every filter of a conv or dense layer from its weights
//! alone; filters scoring below a global threshold are removed and every
//! downstream layer is repaired so the model stays consistent. Threshold
//! sweeps estimate how accuracy falls as more of the model is pruned, and the
//! area under that curve ranks criteria on a given model.
//!
//! A small training and inference engine is included so the whole
//! prune-retrain loop runs without an external framework.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod criterion;
pub mod data;
pub mod engine;
pub mod error;
pub mod flops;
pub mod model;
pub mod pruner;
pub mod scalar;
pub mod sweep;
pub mod tensor;

pub use error::{Error, Result};
pub use model::{FeatureShape, Layer, LayerKind, Model};
pub use scalar::Real;
pub use tensor::{Shape, Tensor};
