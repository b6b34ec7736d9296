//! Desk-scale MNIST runs and the CIFAR-format smoke run.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use cprune::data::{load_cifar10, load_mnist_dir, Dataset, Splits};
use cprune::engine::{evaluate_images, train, TrainConfig};
use cprune::flops::reduction;
use cprune::model::{builtin, BuiltinArch};
use cprune::pruner::{pruned_copy, LayerSelection};
use cprune::sweep::{
    build_curve, compare_criteria, ranking_table, DatasetEvaluator, RankEntry, SweepConfig,
    ThresholdCurve,
};
use cprune::Model;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::Outcome;

const VALIDATION: usize = 5000;
const PER_CLASS: usize = 100;
const DROP_TOLERANCE: f64 = 0.01;
const EVAL_BATCH: usize = 500;
const TRAIN_SEED: u64 = 7;
const RETRAIN_EPOCHS: usize = 2;

pub fn data_dir() -> PathBuf {
    std::env::var_os("CPRUNE_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

pub fn load_mnist() -> cprune::Result<Splits> {
    let (train, test) = load_mnist_dir(data_dir().join("mnist"))?;
    Splits::new(train, test, VALIDATION)
}

/// The sweep configuration shared by every desk run: per-layer rank
/// thresholds, sampled as finely as the plateau tolerance.
fn sweep_config(criterion: &str, kinds: LayerSelection) -> SweepConfig {
    let mut cfg = SweepConfig::new(criterion.parse().unwrap());
    cfg.kinds = kinds;
    cfg.max_gap = DROP_TOLERANCE;
    cfg.max_evals = 256;
    cfg
}

fn test_accuracy(m: &Model, splits: &Splits) -> f64 {
    evaluate_images(m, &splits.test.images, &splits.test.labels, EVAL_BATCH)
        .unwrap()
        .top1_accuracy
}

fn train_builtin(arch: BuiltinArch, splits: &Splits, epochs: usize) -> Model {
    let mut m = builtin(arch, [28, 28, 1], splits.train.class_count)
        .build(TRAIN_SEED)
        .unwrap();
    let cfg = TrainConfig {
        epochs,
        rng_seed: TRAIN_SEED,
        ..TrainConfig::default()
    };
    train(&mut m, &splits.train.images, &splits.train.labels, &cfg).unwrap();
    m
}

pub struct Session {
    splits: Splits,
    subset: Dataset,
    b: Option<Model>,
    b_curves: Vec<ThresholdCurve>,
    b_ranking: Vec<RankEntry>,
}

impl Session {
    pub fn new(splits: Splits) -> Self {
        let subset = splits.validation.balanced_subset(PER_CLASS, 0).unwrap();
        Session {
            splits,
            subset,
            b: None,
            b_curves: Vec::new(),
            b_ranking: Vec::new(),
        }
    }

    fn evaluator(&self) -> DatasetEvaluator<'_> {
        DatasetEvaluator {
            images: &self.subset.images,
            labels: &self.subset.labels,
            metric: Default::default(),
            batch_size: EVAL_BATCH,
        }
    }

    fn compare(&self, m: &Model) -> (Vec<RankEntry>, Vec<ThresholdCurve>) {
        let cfgs: Vec<SweepConfig> = ["std:rank", "range:rank", "mean_abs:rank", "max_abs:rank"]
            .iter()
            .map(|c| sweep_config(c, LayerSelection::Both))
            .collect();
        compare_criteria(m, &cfgs, &mut self.evaluator()).unwrap()
    }

    pub fn train_b(&mut self) -> Outcome {
        const BAR: f64 = 0.98;
        let start = Instant::now();
        let m = train_builtin(BuiltinArch::B, &self.splits, 5);
        let acc = test_accuracy(&m, &self.splits);
        self.b = Some(m);
        Outcome {
            pass: acc >= BAR,
            detail: format!(
                "builtin:B, 5 epochs, seed {TRAIN_SEED}: test top-1 {:.2}% (bar {:.1}%), {:.0}s",
                100.0 * acc,
                100.0 * BAR,
                start.elapsed().as_secs_f64()
            ),
        }
    }

    pub fn criterion_order(&mut self) -> Outcome {
        let m = self.b.as_ref().expect("B is trained first");
        let (ranking, curves) = self.compare(m);
        let auc_of = |name: &str| ranking.iter().find(|e| e.criterion == name).unwrap().auc;
        let (std, mean_abs) = (auc_of("std:rank"), auc_of("mean_abs:rank"));
        let (max_abs, range) = (auc_of("max_abs:rank"), auc_of("range:rank"));
        let pass = std.min(mean_abs) > max_abs.max(range);
        eprint!("{}", ranking_table(&ranking));
        self.b_ranking = ranking;
        self.b_curves = curves;
        Outcome {
            pass,
            detail: format!(
                "both kinds, rank thresholds: AUC std {std:.4}, mean_abs {mean_abs:.4} vs max_abs {max_abs:.4}, \
                 range {range:.4}"
            ),
        }
    }

    fn best_curve(&self) -> &ThresholdCurve {
        let best = self.b_ranking.iter().find(|e| e.best).unwrap();
        self.b_curves
            .iter()
            .find(|c| c.criterion == best.criterion)
            .unwrap()
    }

    pub fn prune_retrain(&mut self) -> Outcome {
        const MIN_FRACTION: f64 = 0.6;
        const MAX_DROP: f64 = 0.01;
        let m = self.b.as_ref().unwrap();
        let curve = self.best_curve();
        let r = plateau_prune_retrain(m, curve, LayerSelection::Both, &self.splits);
        Outcome {
            pass: r.fraction >= MIN_FRACTION && r.after >= r.before - MAX_DROP,
            detail: format!(
                "{} plateau t={:.4}: {:.1}% of filters pruned (bar {:.0}%), test {:.2}% -> {:.2}% pruned -> {:.2}% \
                 after {RETRAIN_EPOCHS} epochs (bar -{:.1}pp)",
                curve.criterion,
                r.threshold,
                100.0 * r.fraction,
                100.0 * MIN_FRACTION,
                100.0 * r.before,
                100.0 * r.pruned,
                100.0 * r.after,
                100.0 * MAX_DROP
            ),
        }
    }

    pub fn conv_heavy_flops(&self) -> Outcome {
        const BAR: f64 = 0.5;
        let a = train_builtin(BuiltinArch::A, &self.splits, 3);
        let (ranking, curves) = self.compare(&a);
        let best = ranking.iter().find(|e| e.best).unwrap();
        let curve = curves
            .iter()
            .find(|c| c.criterion == best.criterion)
            .unwrap();
        let r = plateau_prune_retrain(&a, curve, LayerSelection::Both, &self.splits);
        Outcome {
            pass: r.flops_reduction >= BAR,
            detail: format!(
                "builtin:A, 3 epochs, {} plateau: {:.1}% filters, FLOPs reduction {:.2}% (bar {:.0}%), test {:.2}% -> \
                 {:.2}% after retraining",
                curve.criterion,
                100.0 * r.fraction,
                100.0 * r.flops_reduction,
                100.0 * BAR,
                100.0 * r.before,
                100.0 * r.after
            ),
        }
    }

    pub fn layer_selection(&self) -> Outcome {
        let m = self.b.as_ref().unwrap();
        let both = self.best_curve();
        let cfg = sweep_config(&both.criterion, LayerSelection::Dense);
        let dense = build_curve(m, &cfg, &mut self.evaluator()).unwrap();
        let reduce = |curve: &ThresholdCurve, kinds| {
            let knee = curve.plateau(DROP_TOLERANCE).unwrap();
            let cfg = sweep_config(&curve.criterion, kinds);
            let (_, rep) = pruned_copy(m, &cfg.prune_config(knee.threshold)).unwrap();
            (reduction(rep.flops_before, rep.flops_after), knee.metric)
        };
        let (r_both, acc_both) = reduce(both, LayerSelection::Both);
        let (r_dense, acc_dense) = reduce(&dense, LayerSelection::Dense);
        Outcome {
            pass: r_both >= r_dense,
            detail: format!(
                "{} plateaus (drop {DROP_TOLERANCE}): both kinds FLOPs reduction {:.2}% at validation {:.1}%, dense \
                 only {:.2}% at {:.1}%",
                both.criterion,
                100.0 * r_both,
                100.0 * acc_both,
                100.0 * r_dense,
                100.0 * acc_dense
            ),
        }
    }
}

struct Reduction {
    threshold: f64,
    fraction: f64,
    flops_reduction: f64,
    before: f64,
    pruned: f64,
    after: f64,
}

fn plateau_prune_retrain(
    m: &Model,
    curve: &ThresholdCurve,
    kinds: LayerSelection,
    splits: &Splits,
) -> Reduction {
    let knee = curve.plateau(DROP_TOLERANCE).unwrap();
    let cfg = sweep_config(&curve.criterion, kinds);
    let (mut pruned, rep) = pruned_copy(m, &cfg.prune_config(knee.threshold)).unwrap();
    let pruned_acc = test_accuracy(&pruned, splits);
    let retrain = TrainConfig {
        epochs: RETRAIN_EPOCHS,
        rng_seed: TRAIN_SEED,
        ..TrainConfig::default()
    };
    train(
        &mut pruned,
        &splits.train.images,
        &splits.train.labels,
        &retrain,
    )
    .unwrap();
    Reduction {
        threshold: knee.threshold,
        fraction: rep.fraction_pruned,
        flops_reduction: reduction(rep.flops_before, rep.flops_after),
        before: test_accuracy(m, splits),
        pruned: pruned_acc,
        after: test_accuracy(&pruned, splits),
    }
}

/// Writes a synthetic file in the CIFAR-10 binary batch format and runs the
/// train, sweep, prune, retrain and evaluate steps on it.
pub fn cifar_smoke() -> Outcome {
    const RECORDS: usize = 120;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data_batch_1.bin");
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(8);
    let mut f = std::fs::File::create(&path).unwrap();
    for i in 0..RECORDS {
        let mut record = vec![(i % 10) as u8];
        record.extend((0..3072).map(|_| rng.gen::<u8>()));
        f.write_all(&record).unwrap();
    }
    drop(f);
    let run = || -> cprune::Result<String> {
        let all = load_cifar10(&[&path])?;
        let (train_set, test) = all.split_at(100)?;
        let splits = Splits::new(train_set, test, 20)?;
        let mut m = builtin(BuiltinArch::B, [32, 32, 3], splits.train.class_count).build(1)?;
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 16,
            ..TrainConfig::default()
        };
        train(&mut m, &splits.train.images, &splits.train.labels, &cfg)?;
        let mut sweep = sweep_config("std:rank", LayerSelection::Both);
        sweep.max_evals = 8;
        let mut eval = DatasetEvaluator {
            images: &splits.validation.images,
            labels: &splits.validation.labels,
            metric: Default::default(),
            batch_size: EVAL_BATCH,
        };
        let curve = build_curve(&m, &sweep, &mut eval)?;
        let knee = curve.plateau(DROP_TOLERANCE).unwrap();
        let (mut pruned, rep) = pruned_copy(&m, &sweep.prune_config(knee.threshold))?;
        train(
            &mut pruned,
            &splits.train.images,
            &splits.train.labels,
            &cfg,
        )?;
        let acc = evaluate_images(
            &pruned,
            &splits.test.images,
            &splits.test.labels,
            EVAL_BATCH,
        )?;
        Ok(format!(
            "{RECORDS} synthetic records, {} sweep evaluations, {:.0}% filters pruned, test metric {:.2} (no bar)",
            curve.evaluations(),
            100.0 * rep.fraction_pruned,
            acc.top1_accuracy
        ))
    };
    match run() {
        Ok(detail) => Outcome { pass: true, detail },
        Err(e) => Outcome {
            pass: false,
            detail: format!("error: {e}"),
        },
    }
}
