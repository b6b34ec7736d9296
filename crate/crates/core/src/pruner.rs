//! Threshold pruning with downstream surgery.
//!
//! A filter is removed when its score is strictly below the threshold. If a
//! whole layer falls below it, only its highest-scoring filter survives
//! (lowest index on ties). Removing output channels of layer `i` slices every
//! channel-norm layer up to the next prunable layer, re-indexes through a
//! flatten, and deletes the matching input slices of that next prunable layer.
//! Layers of an unselected kind are never pruned but still receive that
//! input-side surgery.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::criterion::{ApplicationMode, Criterion};
use crate::error::{Error, Result};
use crate::flops::model_flops;
use crate::model::{flatten_index_map, FeatureShape, Layer, LayerKind, Model};

/// Which prunable kinds may lose filters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSelection {
    Conv,
    Dense,
    #[default]
    Both,
}

impl LayerSelection {
    pub fn includes(self, kind: LayerKind) -> bool {
        matches!(
            (self, kind),
            (LayerSelection::Both, LayerKind::Conv2D | LayerKind::Dense)
                | (LayerSelection::Conv, LayerKind::Conv2D)
                | (LayerSelection::Dense, LayerKind::Dense)
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerSelection::Conv => "conv",
            LayerSelection::Dense => "dense",
            LayerSelection::Both => "both",
        }
    }
}

impl FromStr for LayerSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv" => Ok(LayerSelection::Conv),
            "dense" => Ok(LayerSelection::Dense),
            "both" => Ok(LayerSelection::Both),
            other => Err(Error::Config(format!("unknown layer selection {other:?}"))),
        }
    }
}

impl fmt::Display for LayerSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PruneConfig {
    pub criterion: Criterion,
    pub threshold: f64,
    pub mode: ApplicationMode,
    pub kinds: LayerSelection,
    /// Never prune the final conv/dense layer.
    pub protect_output_layer: bool,
}

impl PruneConfig {
    pub fn new(criterion: Criterion, threshold: f64) -> Self {
        PruneConfig {
            criterion,
            threshold,
            mode: ApplicationMode::Static,
            kinds: LayerSelection::Both,
            protect_output_layer: true,
        }
    }

    pub fn with_mode(mut self, mode: ApplicationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_kinds(mut self, kinds: LayerSelection) -> Self {
        self.kinds = kinds;
        self
    }
}

/// Layers eligible to lose filters under `kinds`, in model order.
pub fn target_layers(
    model: &Model,
    kinds: LayerSelection,
    protect_output_layer: bool,
) -> Vec<usize> {
    let last = model.last_prunable();
    model
        .prunable_indices()
        .into_iter()
        .filter(|&i| kinds.includes(model.layers()[i].kind()))
        .filter(|&i| !(protect_output_layer && Some(i) == last))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerScores {
    pub layer: usize,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

/// Scores of every prunable layer of the selected kinds, on `model` as is.
pub fn score_all(
    model: &Model,
    criterion: &Criterion,
    kinds: LayerSelection,
) -> Result<Vec<LayerScores>> {
    model
        .prunable_indices()
        .into_iter()
        .filter(|&i| kinds.includes(model.layers()[i].kind()))
        .map(|layer| {
            let raw = criterion.scorer.score(&model.filter_matrix(layer)?)?;
            let normalized = criterion.normalization.apply(&raw);
            Ok(LayerScores {
                layer,
                raw,
                normalized,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub layer: usize,
    pub kind: LayerKind,
    pub filters_before: usize,
    pub filters_after: usize,
    pub removed: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub criterion: String,
    pub threshold: f64,
    pub mode: ApplicationMode,
    pub kinds: LayerSelection,
    pub layers: Vec<LayerRecord>,
    /// Filters in the layers eligible for pruning.
    pub prunable_filters: usize,
    pub filters_removed: usize,
    pub fraction_pruned: f64,
    pub params_before: usize,
    pub params_after: usize,
    pub flops_before: u64,
    pub flops_after: u64,
}

impl PruneReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Removed filter indices per layer.
    pub fn removed_sets(&self) -> Vec<(usize, &[usize])> {
        self.layers
            .iter()
            .map(|r| (r.layer, r.removed.as_slice()))
            .collect()
    }
}

/// Indices with `score < threshold`, keeping the best filter if none survive.
pub fn removal_set(scores: &[f64], threshold: f64) -> Vec<usize> {
    let mut removed: Vec<usize> = (0..scores.len())
        .filter(|&h| scores[h] < threshold)
        .collect();
    if removed.len() == scores.len() {
        let mut best = 0;
        for (h, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = h;
            }
        }
        removed.remove(best);
    }
    removed
}

/// Prunes `model` in place.
pub fn prune(model: &mut Model, cfg: &PruneConfig) -> Result<PruneReport> {
    if cfg.threshold.is_nan() {
        return Err(Error::Config("threshold is NaN".into()));
    }
    let targets = target_layers(model, cfg.kinds, cfg.protect_output_layer);
    if targets.is_empty() {
        return Err(Error::NothingToPrune);
    }
    let params_before = model.param_count();
    let flops_before = model_flops(model)?.total;
    let memo: Option<Vec<Vec<f64>>> = match cfg.mode {
        ApplicationMode::Static => Some(
            targets
                .iter()
                .map(|&i| cfg.criterion.apply(&model.filter_matrix(i)?))
                .collect::<Result<_>>()?,
        ),
        ApplicationMode::Progressive => None,
    };

    let mut records = Vec::with_capacity(targets.len());
    for (t, &layer) in targets.iter().enumerate() {
        let scores = match &memo {
            Some(m) => m[t].clone(),
            None => cfg.criterion.apply(&model.filter_matrix(layer)?)?,
        };
        let removed = removal_set(&scores, cfg.threshold);
        let before = scores.len();
        if !removed.is_empty() {
            remove_filters(model, layer, &removed)?;
        }
        records.push(LayerRecord {
            layer,
            kind: model.layers()[layer].kind(),
            filters_before: before,
            filters_after: before - removed.len(),
            removed,
        });
    }
    if let Err(e) = model.validate() {
        panic!("surgery left an inconsistent model: {e}");
    }

    let prunable_filters: usize = records.iter().map(|r| r.filters_before).sum();
    let filters_removed: usize = records.iter().map(|r| r.removed.len()).sum();
    Ok(PruneReport {
        criterion: cfg.criterion.name(),
        threshold: cfg.threshold,
        mode: cfg.mode,
        kinds: cfg.kinds,
        layers: records,
        prunable_filters,
        filters_removed,
        fraction_pruned: filters_removed as f64 / prunable_filters as f64,
        params_before,
        params_after: model.param_count(),
        flops_before,
        flops_after: model_flops(model)?.total,
    })
}

/// Prunes a copy, leaving `model` untouched.
pub fn pruned_copy(model: &Model, cfg: &PruneConfig) -> Result<(Model, PruneReport)> {
    let mut copy = model.clone();
    let report = prune(&mut copy, cfg)?;
    Ok((copy, report))
}

/// Removes output channels `removed` of prunable layer `layer` and repairs
/// everything up to and including the next prunable layer.
fn remove_filters(model: &mut Model, layer: usize, removed: &[usize]) -> Result<()> {
    let shapes = model.infer_shapes()?;
    let layers = model.layers_mut();
    match &mut layers[layer] {
        Layer::Conv2D(c) => {
            c.weights = c.weights.delete_indices(3, removed)?;
            c.bias = c.bias.delete_indices(0, removed)?;
        }
        Layer::Dense(d) => {
            d.weights = d.weights.delete_indices(1, removed)?;
            d.bias = d.bias.delete_indices(0, removed)?;
        }
        other => {
            return Err(Error::Kind {
                layer,
                kind: other.kind().name(),
            })
        }
    }
    // indices along the last axis of the activation entering layer j
    let mut indices = removed.to_vec();
    for j in layer + 1..layers.len() {
        match &mut layers[j] {
            Layer::ChannelNorm(n) => n.delete_channels(&indices)?,
            Layer::Flatten => {
                // shapes[j] is the pre-surgery map entering the flatten
                if let FeatureShape::Spatial { .. } = shapes[j] {
                    indices = flatten_index_map(shapes[j], &indices)?;
                }
            }
            Layer::Conv2D(c) => {
                c.weights = c.weights.delete_indices(2, &indices)?;
                return Ok(());
            }
            Layer::Dense(d) => {
                d.weights = d.weights.delete_indices(0, &indices)?;
                return Ok(());
            }
            Layer::MaxPool2D | Layer::Activation(_) | Layer::Dropout { .. } => {}
        }
    }
    Ok(())
}
