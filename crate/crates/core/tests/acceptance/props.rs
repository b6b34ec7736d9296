//! Property suites that need no dataset.

use std::time::Instant;

use cprune::criterion::{ApplicationMode, Criterion, Normalization, Scorer};
use cprune::engine::{batch_loss, forward, gradients, trainable_mask, Batch, Phase};
use cprune::flops::model_flops;
use cprune::model::{self, Padding};
use cprune::pruner::{prune, pruned_copy, score_all, target_layers, LayerSelection, PruneConfig};
use cprune::sweep::{auc, build_curve, Sample, SweepConfig};
use cprune::{Layer, Model};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::gen::{random_inputs, random_model, Limits, SMALL};
use crate::Outcome;

fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

const NO_NORM: Limits = Limits {
    norm: false,
    ..SMALL
};

/// Zeroes the weights and bias of filter `h` of a conv or dense layer.
fn zero_filter(layer: &mut Layer, h: usize) {
    let (w, b) = match layer {
        Layer::Conv2D(c) => (&mut c.weights, &mut c.bias),
        Layer::Dense(d) => (&mut d.weights, &mut d.bias),
        _ => unreachable!("only prunable layers are zeroed"),
    };
    let width = *w.dims().last().unwrap();
    for (i, v) in w.data_mut().iter_mut().enumerate() {
        if i % width == h {
            *v = 0.0;
        }
    }
    b.data_mut()[h] = 0.0;
}

fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max)
}

pub fn zero_filter_exactness() -> Outcome {
    const MODELS: usize = 200;
    const TOL: f32 = 1e-6;
    let mut r = rng(1);
    let mut worst = 0.0f32;
    let mut removed_total = 0;
    let mut bad_sets = 0;
    let mut done = 0;
    while done < MODELS {
        let mut m = random_model(&mut r, &NO_NORM);
        let targets = target_layers(&m, LayerSelection::Both, true);
        let mut zeroed: Vec<(usize, Vec<usize>)> = Vec::new();
        for &l in &targets {
            let h = m.layers()[l].filters().unwrap();
            if h < 2 {
                continue;
            }
            let mut idx: Vec<usize> = (0..h).collect();
            idx.shuffle(&mut r);
            let mut subset: Vec<usize> = idx[..r.gen_range(0..h)].to_vec();
            subset.sort_unstable();
            for &f in &subset {
                zero_filter(&mut m.layers_mut()[l], f);
            }
            if !subset.is_empty() {
                zeroed.push((l, subset));
            }
        }
        if zeroed.is_empty() {
            continue;
        }
        let criterion: Criterion = "mean_abs:raw".parse().unwrap();
        let min_positive = score_all(&m, &criterion, LayerSelection::Both)
            .unwrap()
            .iter()
            .filter(|s| targets.contains(&s.layer))
            .flat_map(|s| s.raw.clone())
            .filter(|&v| v > 0.0)
            .fold(f64::INFINITY, f64::min);
        let x = random_inputs(&mut r, &m, 20);
        let before = forward(&m, &x).unwrap();
        let mut pruned = m.clone();
        let report = prune(
            &mut pruned,
            &PruneConfig::new(criterion, 0.5 * min_positive),
        )
        .unwrap();
        let removed: Vec<(usize, Vec<usize>)> = report
            .removed_sets()
            .into_iter()
            .filter(|(_, s)| !s.is_empty())
            .map(|(l, s)| (l, s.to_vec()))
            .collect();
        if removed != zeroed {
            bad_sets += 1;
        }
        removed_total += report.filters_removed;
        let after = forward(&pruned, &x).unwrap();
        worst = worst.max(max_abs_diff(before.data(), after.data()));
        done += 1;
    }
    Outcome {
        pass: worst <= TOL && bad_sets == 0,
        detail: format!(
            "{MODELS} models, {removed_total} zero filters removed, max |Δoutput| {worst:.2e} (tol {TOL:.0e}), \
             {bad_sets} removal-set mismatches"
        ),
    }
}

pub fn gradient_checks() -> Outcome {
    const MODELS: usize = 50;
    const STEP: f32 = 1e-2;
    const REL_TOL: f64 = 1e-2;
    const MIN_GRAD: f64 = 1e-6;
    let tiny = Limits {
        side: 6,
        channels: 2,
        filters: 3,
        norm: true,
    };
    let start = Instant::now();
    let mut r = rng(2);
    let mut checked = 0usize;
    let mut failed = 0usize;
    let mut failed_f64 = 0usize;
    let mut failed_fine = 0usize;
    let mut worst = 0.0f64;
    let mut failing_models = 0;
    for _ in 0..MODELS {
        let m = random_model(&mut r, &tiny);
        let classes = m.output_width().unwrap();
        let batch = Batch {
            inputs: random_inputs(&mut r, &m, 4),
            labels: (0..4).map(|_| r.gen_range(0..classes)).collect(),
        };
        let step = gradients(&m, &batch, Phase::Training { dropout: false }, None).unwrap();
        let mask = trainable_mask(&m);
        // the same check in f64 separates rounding from kinks in the loss
        let m64: Model<f64> = m.cast();
        let batch64 = Batch {
            inputs: batch.inputs.cast(),
            labels: batch.labels.clone(),
        };
        let step64 = gradients(&m64, &batch64, Phase::Training { dropout: false }, None).unwrap();
        let mut model_failed = false;
        for (p, grad) in step.grads.iter().enumerate() {
            if !mask[p] {
                continue;
            }
            for i in 0..grad.len() {
                let g = grad.data()[i] as f64;
                if g.abs() <= MIN_GRAD {
                    continue;
                }
                let mut plus = m.clone();
                plus.params_mut()[p].data_mut()[i] += STEP;
                let mut minus = m.clone();
                minus.params_mut()[p].data_mut()[i] -= STEP;
                let fd = (batch_loss(&plus, &batch).unwrap() - batch_loss(&minus, &batch).unwrap())
                    / (2.0 * STEP as f64);
                let rel = (g - fd).abs() / g.abs().max(fd.abs());
                worst = worst.max(rel);
                checked += 1;
                if rel >= REL_TOL {
                    failed += 1;
                    model_failed = true;
                    let g = step64.grads[p].data()[i];
                    let rel64 = |h: f64| {
                        let mut plus = m64.clone();
                        plus.params_mut()[p].data_mut()[i] += h;
                        let mut minus = m64.clone();
                        minus.params_mut()[p].data_mut()[i] -= h;
                        let fd = (batch_loss(&plus, &batch64).unwrap()
                            - batch_loss(&minus, &batch64).unwrap())
                            / (2.0 * h);
                        (g - fd).abs() / g.abs().max(fd.abs())
                    };
                    failed_f64 += (rel64(STEP as f64) >= REL_TOL) as usize;
                    failed_fine += (rel64(1e-6) >= REL_TOL) as usize;
                }
            }
        }
        failing_models += model_failed as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: failed == 0 && secs < 60.0,
        detail: format!(
            "{MODELS} f32 models, {checked} coordinates with |g| > {MIN_GRAD:.0e}, step {STEP:.0e}: \
             {failed} above rel {REL_TOL:.0e} in {failing_models} models ({failed_f64} of them also in f64, {failed_fine} in f64 at step 1e-6), \
             worst rel {worst:.2e}, {secs:.1}s (limit 60s)"
        ),
    }
}

fn random_criterion(r: &mut impl Rng) -> Criterion {
    let scorer = Scorer::BUILTIN[r.gen_range(0..Scorer::BUILTIN.len())].clone();
    let normalization = [
        Normalization::Raw,
        Normalization::MinMax,
        Normalization::Rank,
    ][r.gen_range(0..3)];
    Criterion::new(scorer, normalization)
}

fn random_kinds(r: &mut impl Rng) -> LayerSelection {
    [
        LayerSelection::Both,
        LayerSelection::Conv,
        LayerSelection::Dense,
    ][r.gen_range(0..3)]
}

/// A threshold drawn around the model's own normalized scores.
fn random_threshold(r: &mut impl Rng, m: &Model, c: &Criterion, kinds: LayerSelection) -> f64 {
    let scores: Vec<f64> = score_all(m, c, kinds)
        .unwrap()
        .into_iter()
        .flat_map(|s| s.normalized)
        .collect();
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    match r.gen_range(0..10) {
        0 => f64::NEG_INFINITY,
        1 => f64::INFINITY,
        2 => scores[r.gen_range(0..scores.len())],
        _ => lo + (hi - lo) * r.gen_range(-0.1..1.1),
    }
}

pub fn surgery_fuzz() -> Outcome {
    const TUPLES: usize = 500;
    let mut r = rng(3);
    let mut problems = Vec::new();
    let mut done = 0;
    let mut removed = 0;
    while done < TUPLES {
        let m = random_model(&mut r, &SMALL);
        let c = random_criterion(&mut r);
        let kinds = random_kinds(&mut r);
        let protect = r.gen_bool(0.8);
        if target_layers(&m, kinds, protect).is_empty() {
            continue;
        }
        let mode = if r.gen_bool(0.5) {
            ApplicationMode::Static
        } else {
            ApplicationMode::Progressive
        };
        let t = random_threshold(&mut r, &m, &c, kinds);
        let cfg = PruneConfig {
            criterion: c,
            threshold: t,
            mode,
            kinds,
            protect_output_layer: protect,
        };
        done += 1;
        let (pruned, report) = match pruned_copy(&m, &cfg) {
            Ok(x) => x,
            Err(e) => {
                problems.push(format!("prune: {e}"));
                continue;
            }
        };
        removed += report.filters_removed;
        if let Err(e) = pruned.infer_shapes() {
            problems.push(format!("shapes: {e}"));
            continue;
        }
        let mut bytes = Vec::new();
        model::write_to(&pruned, &mut bytes).unwrap();
        match model::read_from(bytes.as_slice()) {
            Ok(back) if back.bitwise_eq(&pruned) => {}
            Ok(_) => problems.push("round trip differs".into()),
            Err(e) => problems.push(format!("reload: {e}")),
        }
        let x = random_inputs(&mut r, &pruned, 3);
        match forward(&pruned, &x) {
            Ok(y) if y.all_finite() => {}
            Ok(_) => problems.push("non-finite output".into()),
            Err(e) => problems.push(format!("forward: {e}")),
        }
    }
    Outcome {
        pass: problems.is_empty(),
        detail: format!(
            "{TUPLES} (model, criterion, threshold, kinds, mode) tuples, {removed} filters removed, {} failures{}",
            problems.len(),
            problems.first().map(|p| format!(", first: {p}")).unwrap_or_default()
        ),
    }
}

pub fn monotonicity() -> Outcome {
    const MODELS: usize = 100;
    const RUNGS: usize = 12;
    const CURVES: usize = 20;
    let mut r = rng(4);
    let mut violations = 0;
    let mut pairs = 0;
    let mut done = 0;
    while done < MODELS {
        let m = random_model(&mut r, &SMALL);
        let c = random_criterion(&mut r);
        let kinds = random_kinds(&mut r);
        if target_layers(&m, kinds, true).is_empty() {
            continue;
        }
        done += 1;
        let mut ladder: Vec<f64> = (0..RUNGS)
            .map(|_| random_threshold(&mut r, &m, &c, kinds))
            .collect();
        ladder.sort_by(f64::total_cmp);
        let reports: Vec<_> = ladder
            .iter()
            .map(|&t| {
                pruned_copy(&m, &PruneConfig::new(c.clone(), t).with_kinds(kinds))
                    .unwrap()
                    .1
            })
            .collect();
        for w in reports.windows(2) {
            pairs += 1;
            let nested = w[0]
                .removed_sets()
                .iter()
                .zip(w[1].removed_sets())
                .all(|((la, a), (lb, b))| la == &lb && a.iter().all(|f| b.contains(f)));
            if !nested || w[0].fraction_pruned > w[1].fraction_pruned {
                violations += 1;
            }
        }
    }
    let mut curve_violations = 0;
    for _ in 0..CURVES {
        let m = random_model(&mut r, &SMALL);
        let mut cfg = SweepConfig::new(random_criterion(&mut r));
        cfg.max_gap = 0.01;
        let full = m.param_count() as f64;
        let mut eval = |p: &Model| Ok(p.param_count() as f64 / full);
        let curve = build_curve(&m, &cfg, &mut eval).unwrap();
        curve_violations += curve
            .samples
            .windows(2)
            .filter(|w| {
                w[0].threshold >= w[1].threshold || w[0].fraction_pruned > w[1].fraction_pruned
            })
            .count();
    }
    Outcome {
        pass: violations == 0 && curve_violations == 0,
        detail: format!(
            "{MODELS} static ladders of {RUNGS} thresholds: {violations}/{pairs} adjacent pairs not nested; \
             {CURVES} sweep curves: {curve_violations} decreasing steps"
        ),
    }
}

/// FLOPs of one model recomputed from the closed forms with its own shape
/// walk, per layer.
fn closed_form_flops(m: &Model) -> Vec<u64> {
    let dims = m.input_shape().dims();
    let (mut rows, mut cols, mut ch) = (dims[0] as u64, dims[1] as u64, dims[2] as u64);
    let mut flat: Option<u64> = None;
    let mut out = Vec::new();
    for layer in m.layers() {
        let f = match layer {
            Layer::Conv2D(c) => {
                let (k1, k2) = (c.weights.dims()[0] as u64, c.weights.dims()[1] as u64);
                let h = c.weights.dims()[3] as u64;
                if c.padding == Padding::Valid {
                    rows = rows + 1 - k1;
                    cols = cols + 1 - k2;
                }
                let f = 2 * k1 * k2 * rows * cols * ch * h;
                ch = h;
                f
            }
            Layer::Dense(d) => {
                let (i, h) = (d.weights.dims()[0] as u64, d.weights.dims()[1] as u64);
                assert_eq!(Some(i), flat);
                flat = Some(h);
                2 * i * h
            }
            Layer::MaxPool2D => {
                rows /= 2;
                cols /= 2;
                0
            }
            Layer::Flatten => {
                flat = Some(rows * cols * ch);
                0
            }
            _ => 0,
        };
        out.push(f);
    }
    out
}

/// Output spatial size and input channels of a conv layer, by walking shapes.
fn conv_geometry(m: &Model, layer: usize) -> (u64, u64, u64) {
    let shapes = m.infer_shapes().unwrap();
    let Layer::Conv2D(c) = &m.layers()[layer] else {
        unreachable!()
    };
    let cprune::FeatureShape::Spatial {
        rows,
        cols,
        channels,
    } = shapes[layer]
    else {
        unreachable!()
    };
    let (k1, k2) = c.kernel();
    let (rh, rw) = match c.padding {
        Padding::Same => (rows, cols),
        Padding::Valid => (rows + 1 - k1, cols + 1 - k2),
    };
    (rh as u64, rw as u64, channels as u64)
}

pub fn flops_exactness() -> Outcome {
    const MODELS: usize = 100;
    let mut r = rng(5);
    let mut total_mismatch = 0;
    let mut delta_mismatch = 0;
    let mut deltas = 0;
    for _ in 0..MODELS {
        let m = random_model(&mut r, &SMALL);
        let report = model_flops(&m).unwrap();
        let oracle = closed_form_flops(&m);
        if report.layers.iter().map(|l| l.flops).collect::<Vec<_>>() != oracle
            || report.total != oracle.iter().sum::<u64>()
        {
            total_mismatch += 1;
        }
        // removing one conv filter costs that layer exactly 2·k1·k2·rh·rw·I
        let targets = target_layers(&m, LayerSelection::Conv, true);
        for &l in &targets {
            let Layer::Conv2D(c) = &m.layers()[l] else {
                unreachable!()
            };
            if c.filters() < 2 {
                continue;
            }
            let (k1, k2) = c.kernel();
            let (rh, rw, i) = conv_geometry(&m, l);
            let mut zeroed = m.clone();
            zero_filter(&mut zeroed.layers_mut()[l], r.gen_range(0..c.filters()));
            // every other filter must score above the threshold
            let crit: Criterion = "max_abs:raw".parse().unwrap();
            let floor = score_all(&zeroed, &crit, LayerSelection::Conv)
                .unwrap()
                .iter()
                .flat_map(|s| s.raw.clone())
                .filter(|&v| v > 0.0)
                .fold(f64::INFINITY, f64::min);
            let cfg = PruneConfig::new(crit, 0.5 * floor).with_kinds(LayerSelection::Conv);
            let (pruned, rep) = pruned_copy(&zeroed, &cfg).unwrap();
            if rep.filters_removed != 1 {
                continue;
            }
            let after = model_flops(&pruned).unwrap();
            deltas += 1;
            let own = report.layers[l].flops - after.layers[l].flops;
            if own != 2 * k1 as u64 * k2 as u64 * rh * rw * i
                || rep.flops_before - rep.flops_after != report.total - after.total
            {
                delta_mismatch += 1;
            }
        }
    }
    Outcome {
        pass: total_mismatch == 0 && delta_mismatch == 0,
        detail: format!(
            "{MODELS} models: {total_mismatch} per-layer/total mismatches; {deltas} single-filter removals: \
             {delta_mismatch} deltas off 2·k1·k2·rh·rw·I"
        ),
    }
}

/// Largest metric change between threshold neighbours.
fn adjacent_gap(samples: &[Sample]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.threshold.total_cmp(&b.threshold));
    s.windows(2)
        .map(|w| (w[1].metric - w[0].metric).abs())
        .fold(0.0, f64::max)
}

pub fn sweep_oracle() -> Outcome {
    const MODELS: usize = 30;
    const GRID: usize = 64;
    let mut r = rng(6);
    let mut worse_gap = 0;
    let mut over_budget = 0;
    let mut evals = Vec::new();
    for _ in 0..MODELS {
        let m = random_model(&mut r, &SMALL);
        let mut cfg = SweepConfig::new(random_criterion(&mut r));
        let total: usize = target_layers(&m, cfg.kinds, true)
            .iter()
            .map(|&l| m.layers()[l].filters().unwrap())
            .sum();
        let levels = r.gen_range(1..=4) as f64;
        // metric steps down as filters disappear
        let step_metric = |p: &Model| -> cprune::Result<f64> {
            let left: usize = target_layers(p, LayerSelection::Both, true)
                .iter()
                .map(|&l| p.layers()[l].filters().unwrap())
                .sum();
            Ok((left as f64 / total as f64 * levels).floor() / levels)
        };
        let scores: Vec<f64> = score_all(&m, &cfg.criterion, cfg.kinds)
            .unwrap()
            .into_iter()
            .filter(|s| target_layers(&m, cfg.kinds, true).contains(&s.layer))
            .flat_map(|s| s.normalized)
            .collect();
        let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let grid: Vec<Sample> = (0..GRID)
            .map(|k| {
                let t = lo + (hi - lo) * k as f64 / (GRID - 1) as f64;
                let (p, rep) = pruned_copy(&m, &cfg.prune_config(t)).unwrap();
                Sample {
                    threshold: t,
                    fraction_pruned: rep.fraction_pruned,
                    metric: step_metric(&p).unwrap(),
                }
            })
            .collect();
        let bound = adjacent_gap(&grid).max(1e-12);
        cfg.max_gap = bound;
        cfg.max_evals = GRID;
        let mut eval = step_metric;
        let curve = build_curve(&m, &cfg, &mut eval).unwrap();
        if adjacent_gap(&curve.samples) > bound {
            worse_gap += 1;
        }
        if curve.evaluations() > GRID {
            over_budget += 1;
        }
        evals.push(curve.evaluations());
    }
    let mut constant_ok = true;
    for _ in 0..10 {
        let m = random_model(&mut r, &SMALL);
        let mut calls = 0;
        let mut eval = |_: &Model| {
            calls += 1;
            Ok(0.75)
        };
        let curve = build_curve(&m, &SweepConfig::new(random_criterion(&mut r)), &mut eval);
        constant_ok &= matches!(curve, Ok(c) if c.evaluations() == 2) && calls == 2;
    }
    let mean = evals.iter().sum::<usize>() as f64 / evals.len() as f64;
    Outcome {
        pass: worse_gap == 0 && over_budget == 0 && constant_ok,
        detail: format!(
            "{MODELS} step-metric models vs {GRID}-point grid: {worse_gap} larger gaps, {over_budget} over budget, \
             mean {mean:.1} / max {} evaluations; constant metric stops at 2 evaluations: {constant_ok}",
            evals.iter().max().unwrap()
        ),
    }
}

pub fn auc_properties() -> Outcome {
    const TOL: f64 = 1e-9;
    let mut r = rng(7);
    let s = |x: f64, m: f64, t: f64| Sample {
        threshold: t,
        fraction_pruned: x,
        metric: m,
    };
    let mut worst_const = 0.0f64;
    for _ in 0..200 {
        let c: f64 = r.gen_range(0.0..=1.0);
        let n = r.gen_range(1..20);
        let samples: Vec<Sample> = (0..n)
            .map(|k| s(r.gen_range(0.0..1.0), c, k as f64))
            .collect();
        worst_const = worst_const.max((auc(&samples) - c).abs());
    }
    let triangle = (auc(&[s(0.0, 1.0, 0.0), s(1.0, 0.0, 1.0)]) - 0.5).abs();
    let mut worst_perm = 0.0f64;
    for _ in 0..200 {
        let n = r.gen_range(2..30);
        let mut samples: Vec<Sample> = (0..n)
            .map(|k| s(r.gen_range(0.0..1.0), r.gen_range(0.0..1.0), k as f64))
            .collect();
        let base = auc(&samples);
        samples.shuffle(&mut r);
        let dup = samples[r.gen_range(0..n)];
        samples.push(dup);
        samples.shuffle(&mut r);
        worst_perm = worst_perm.max((auc(&samples) - base).abs());
    }
    Outcome {
        pass: worst_const <= TOL && triangle <= TOL && worst_perm <= TOL,
        detail: format!(
            "constant |Δ| {worst_const:.1e}, triangle |Δ| {triangle:.1e}, permutation+duplicate |Δ| {worst_perm:.1e} \
             (tol {TOL:.0e})"
        ),
    }
}
