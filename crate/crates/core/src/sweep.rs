//! Adaptive sampling of the threshold curve (fraction pruned against a
//! validation metric), area under it, and criterion ranking.
//!
//! Both domain endpoints are evaluated first. After that the samples are
//! ordered by metric, the adjacent pair with the largest metric gap is found,
//! and the midpoint of their thresholds is evaluated. Neighbours in threshold
//! order are candidate pairs as well, which only matters when the metric is
//! not monotone. Refinement stops once every gap is at most `max_gap`, or
//! after `max_evals` evaluations.
//!
//! A pair is atomic when no threshold strictly between its two thresholds can
//! produce a model different from both. In static mode this means at most one
//! distinct criterion score lies in `[t_lo, t_hi)`. In progressive mode the
//! scores move with upstream surgery, so a pair is atomic only once its
//! interval collapses to floating-point resolution. When the metric is not
//! monotone in the threshold, a pair can also be exhausted: its midpoint was
//! already sampled. Atomic and exhausted pairs are never split, and a gap
//! across one does not block convergence.

use serde::{Deserialize, Serialize};

use crate::criterion::{ApplicationMode, Criterion};
use crate::engine::evaluate_images;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::pruner::{pruned_copy, score_all, target_layers, LayerSelection, PruneConfig};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMetric {
    #[default]
    Accuracy,
    /// `exp(-mean cross-entropy)`, which lies in `(0, 1]`.
    NegLoss,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XAxis {
    /// Fraction of eligible filters removed.
    #[default]
    Filters,
    /// Fraction of all model parameters removed.
    Params,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub criterion: Criterion,
    pub mode: ApplicationMode,
    pub kinds: LayerSelection,
    /// `[t_min, t_max]`; `None` spans the model's own score range.
    pub domain: Option<(f64, f64)>,
    pub max_gap: f64,
    pub max_evals: usize,
    pub metric: SweepMetric,
    pub x_axis: XAxis,
    pub protect_output_layer: bool,
}

impl SweepConfig {
    pub fn new(criterion: Criterion) -> Self {
        SweepConfig {
            criterion,
            mode: ApplicationMode::Static,
            kinds: LayerSelection::Both,
            domain: None,
            max_gap: 0.02,
            max_evals: 64,
            metric: SweepMetric::Accuracy,
            x_axis: XAxis::Filters,
            protect_output_layer: true,
        }
    }

    /// Pruning configuration of one sample at `threshold`.
    pub fn prune_config(&self, threshold: f64) -> PruneConfig {
        PruneConfig {
            criterion: self.criterion.clone(),
            threshold,
            mode: self.mode,
            kinds: self.kinds,
            protect_output_layer: self.protect_output_layer,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.max_gap > 0.0) {
            return Err(Error::Config(format!(
                "max_gap {} must be positive",
                self.max_gap
            )));
        }
        if self.max_evals < 2 {
            return Err(Error::Config("max_evals must be at least 2".into()));
        }
        if let Some((lo, hi)) = self.domain {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("threshold domain [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Scores a pruned model; higher is better, expected in `[0, 1]`.
pub trait Evaluator {
    fn evaluate(&mut self, model: &Model) -> Result<f64>;
}

impl<F: FnMut(&Model) -> Result<f64>> Evaluator for F {
    fn evaluate(&mut self, model: &Model) -> Result<f64> {
        self(model)
    }
}

/// Evaluates on a fixed image set.
pub struct DatasetEvaluator<'a> {
    pub images: &'a Tensor,
    pub labels: &'a [usize],
    pub metric: SweepMetric,
    pub batch_size: usize,
}

impl Evaluator for DatasetEvaluator<'_> {
    fn evaluate(&mut self, model: &Model) -> Result<f64> {
        let m = evaluate_images(model, self.images, self.labels, self.batch_size)?;
        Ok(match self.metric {
            SweepMetric::Accuracy => m.top1_accuracy,
            SweepMetric::NegLoss => (-m.mean_loss).exp(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub threshold: f64,
    pub fraction_pruned: f64,
    pub metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurve {
    pub criterion: String,
    /// Sorted by threshold.
    pub samples: Vec<Sample>,
    /// Every gap above `max_gap` spans an atomic or exhausted pair.
    pub converged: bool,
    /// Largest metric gap between metric-adjacent or threshold-adjacent
    /// samples.
    pub max_gap: f64,
}

impl ThresholdCurve {
    pub fn evaluations(&self) -> usize {
        self.samples.len()
    }

    pub fn auc(&self) -> f64 {
        auc(&self.samples)
    }

    pub fn plateau(&self, drop_tolerance: f64) -> Option<Sample> {
        plateau(&self.samples, drop_tolerance)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fraction_pruned,metric\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{}\n",
                s.threshold, s.fraction_pruned, s.metric
            ));
        }
        out
    }
}

/// Largest gap between adjacent distinct metric values, ignoring pairs for
/// which `skip` holds. Each pair is represented by the two closest
/// thresholds across the two metric groups. Neighbours in threshold order
/// are candidates too, so a non-monotone curve cannot hide a jump behind an
/// intermediate metric value. Returns the gap and the pair's thresholds,
/// lower first.
fn widest_gap(
    samples: &[Sample],
    mut skip: impl FnMut(f64, f64) -> bool,
) -> Option<(f64, f64, f64)> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| {
        a.metric
            .total_cmp(&b.metric)
            .then(a.threshold.total_cmp(&b.threshold))
    });
    let mut groups: Vec<(f64, Vec<f64>)> = Vec::new();
    for s in sorted {
        match groups.last_mut() {
            Some((m, ts)) if *m == s.metric => ts.push(s.threshold),
            _ => groups.push((s.metric, vec![s.threshold])),
        }
    }
    let mut candidates: Vec<(f64, f64, f64)> = Vec::new();
    for w in groups.windows(2) {
        let mut pair: Option<(f64, f64)> = None;
        for &a in &w[0].1 {
            for &b in &w[1].1 {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                if pair.is_none_or(|(pl, ph)| hi - lo < ph - pl) {
                    pair = Some((lo, hi));
                }
            }
        }
        let (lo, hi) = pair.expect("groups are nonempty");
        candidates.push((w[1].0 - w[0].0, lo, hi));
    }
    let mut by_threshold = samples.to_vec();
    by_threshold.sort_by(|a, b| a.threshold.total_cmp(&b.threshold));
    for w in by_threshold.windows(2) {
        if w[0].threshold < w[1].threshold {
            candidates.push((
                (w[1].metric - w[0].metric).abs(),
                w[0].threshold,
                w[1].threshold,
            ));
        }
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for (gap, lo, hi) in candidates {
        if gap == 0.0 || skip(lo, hi) {
            continue;
        }
        if best.is_none_or(|(g, _, _)| gap > g) {
            best = Some((gap, lo, hi));
        }
    }
    best
}

/// Samples the threshold curve of `model`, which is never modified.
pub fn build_curve(
    model: &Model,
    cfg: &SweepConfig,
    evaluator: &mut dyn Evaluator,
) -> Result<ThresholdCurve> {
    cfg.validate()?;
    if target_layers(model, cfg.kinds, cfg.protect_output_layer).is_empty() {
        return Err(Error::NothingToPrune);
    }
    // scores of the eligible layers on the unpruned model, sorted and deduped
    let targets = target_layers(model, cfg.kinds, cfg.protect_output_layer);
    let mut scores: Vec<f64> = score_all(model, &cfg.criterion, cfg.kinds)?
        .into_iter()
        .filter(|s| targets.contains(&s.layer))
        .flat_map(|s| s.normalized)
        .collect();
    scores.sort_by(f64::total_cmp);
    scores.dedup();
    let (t_min, t_max) = match cfg.domain {
        Some(d) => d,
        // equal scores still get two endpoints: nothing pruned, all pruned
        None => {
            let (lo, hi) = (scores[0], *scores.last().expect("nonempty"));
            (lo, if hi > lo { hi } else { lo.next_up() })
        }
    };
    let params_before = model.param_count() as f64;

    let mut samples: Vec<Sample> = Vec::new();
    let mut run = |t: f64, samples: &mut Vec<Sample>| -> Result<()> {
        let (pruned, report) = pruned_copy(model, &cfg.prune_config(t))?;
        let metric = evaluator.evaluate(&pruned)?;
        if !metric.is_finite() {
            return Err(Error::Numerics(format!("metric {metric} at threshold {t}")));
        }
        let fraction_pruned = match cfg.x_axis {
            XAxis::Filters => report.fraction_pruned,
            XAxis::Params => 1.0 - report.params_after as f64 / params_before,
        };
        samples.push(Sample {
            threshold: t,
            fraction_pruned,
            metric,
        });
        Ok(())
    };
    run(t_min, &mut samples)?;
    run(t_max, &mut samples)?;

    let atomic = |lo: f64, hi: f64| -> bool {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            return true;
        }
        match cfg.mode {
            ApplicationMode::Static => {
                let from = scores.partition_point(|s| *s < lo);
                let to = scores.partition_point(|s| *s < hi);
                to - from <= 1
            }
            ApplicationMode::Progressive => false,
        }
    };
    let mut converged = false;
    loop {
        // a pair whose midpoint is already sampled cannot be refined further
        let sampled: Vec<u64> = samples.iter().map(|s| s.threshold.to_bits()).collect();
        let exhausted =
            |lo: f64, hi: f64| atomic(lo, hi) || sampled.contains(&(0.5 * (lo + hi)).to_bits());
        match widest_gap(&samples, exhausted) {
            None => {
                converged = true;
                break;
            }
            Some((gap, _, _)) if gap <= cfg.max_gap => {
                converged = true;
                break;
            }
            Some((_, lo, hi)) => {
                if samples.len() >= cfg.max_evals {
                    break;
                }
                run(0.5 * (lo + hi), &mut samples)?;
            }
        }
    }
    let max_gap = widest_gap(&samples, |_, _| false).map_or(0.0, |g| g.0);
    samples.sort_by(|a, b| a.threshold.total_cmp(&b.threshold));
    Ok(ThresholdCurve {
        criterion: cfg.criterion.name(),
        samples,
        converged,
        max_gap,
    })
}

/// Trapezoidal area under metric against fraction pruned over `[0, 1]`.
/// The curve is extended flat to both ends; of samples sharing an x, the
/// last in `(x, threshold, metric)` order is kept.
pub fn auc(samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| {
        a.fraction_pruned
            .total_cmp(&b.fraction_pruned)
            .then(a.threshold.total_cmp(&b.threshold))
            .then(a.metric.total_cmp(&b.metric))
    });
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(sorted.len() + 2);
    for s in sorted {
        match points.last_mut() {
            Some(p) if p.0 == s.fraction_pruned => p.1 = s.metric,
            _ => points.push((s.fraction_pruned, s.metric)),
        }
    }
    let first = points[0];
    let last = *points.last().expect("nonempty");
    if first.0 > 0.0 {
        points.insert(0, (0.0, first.1));
    }
    if last.0 < 1.0 {
        points.push((1.0, last.1));
    }
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * 0.5)
        .sum()
}

/// The sample with the largest x whose metric is within `drop_tolerance`
/// of the best metric; the lowest threshold wins among equal x.
pub fn plateau(samples: &[Sample], drop_tolerance: f64) -> Option<Sample> {
    let best = samples
        .iter()
        .map(|s| s.metric)
        .fold(f64::NEG_INFINITY, f64::max);
    samples
        .iter()
        .filter(|s| s.metric >= best - drop_tolerance)
        .copied()
        .max_by(|a, b| {
            a.fraction_pruned
                .total_cmp(&b.fraction_pruned)
                .then(b.threshold.total_cmp(&a.threshold))
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub criterion: String,
    pub auc: f64,
    pub best: bool,
    pub evaluations: usize,
    pub converged: bool,
}

/// Sweeps each config on the same model and ranks by AUC, highest first,
/// ties by criterion name.
pub fn compare_criteria(
    model: &Model,
    cfgs: &[SweepConfig],
    evaluator: &mut dyn Evaluator,
) -> Result<(Vec<RankEntry>, Vec<ThresholdCurve>)> {
    let Some(first) = cfgs.first() else {
        return Err(Error::Config("no criteria to compare".into()));
    };
    if cfgs.iter().any(|c| {
        (c.kinds, c.metric, c.x_axis, c.protect_output_layer)
            != (
                first.kinds,
                first.metric,
                first.x_axis,
                first.protect_output_layer,
            )
    }) {
        return Err(Error::Config(
            "compared sweeps must share layer selection, metric and x-axis".into(),
        ));
    }
    let curves = cfgs
        .iter()
        .map(|c| build_curve(model, c, evaluator))
        .collect::<Result<Vec<_>>>()?;
    Ok((rank(&curves), curves))
}

pub fn rank(curves: &[ThresholdCurve]) -> Vec<RankEntry> {
    let mut entries: Vec<RankEntry> = curves
        .iter()
        .map(|c| RankEntry {
            criterion: c.criterion.clone(),
            auc: c.auc(),
            best: false,
            evaluations: c.evaluations(),
            converged: c.converged,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.auc
            .total_cmp(&a.auc)
            .then_with(|| a.criterion.cmp(&b.criterion))
    });
    if let Some(e) = entries.first_mut() {
        e.best = true;
    }
    entries
}

/// Fixed-width text table with the best criterion starred.
pub fn ranking_table(entries: &[RankEntry]) -> String {
    let mut out = format!("{:<20} {:>8} {:>6}\n", "criterion", "auc", "evals");
    for e in entries {
        let name = if e.best {
            format!("{}*", e.criterion)
        } else {
            e.criterion.clone()
        };
        out.push_str(&format!("{name:<20} {:>8.4} {:>6}\n", e.auc, e.evaluations));
    }
    out
}
