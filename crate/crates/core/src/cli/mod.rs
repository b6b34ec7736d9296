//! The `cprune` command line.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure,
//! 4 I/O or file-format error. Every command writes a [`RunManifest`] next
//! to its primary output, or to stderr when it has none.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use manifest::{Artifact, RunManifest};

use crate::criterion::{ApplicationMode, Criterion};
use crate::data::{
    cifar10_files, load_cifar10, load_mnist, Dataset, Splits, MNIST_TEST, MNIST_TRAIN,
};
use crate::engine::{evaluate_images, train_with, Metric, TrainConfig};
use crate::error::{Error, Result};
use crate::flops::{model_flops, reduction};
use crate::model::{self, builtin, ArchSpec, BuiltinArch, Model};
use crate::pruner::{prune, LayerSelection, PruneConfig};
use crate::sweep::{
    build_curve, compare_criteria, ranking_table, DatasetEvaluator, SweepConfig, SweepMetric, XAxis,
};

/// Environment variable naming the dataset root directory.
pub const DATA_DIR_ENV: &str = "CPRUNE_DATA_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICS: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerics(_) => EXIT_NUMERICS,
        Error::Io { .. } | Error::Format(_) => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "cprune",
    version,
    about = "Criterion-based structured filter pruning"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from an architecture, or retrain an existing one.
    Train(TrainArgs),
    /// Top-1 accuracy and mean loss on a dataset split.
    Evaluate(EvaluateArgs),
    /// Sample the threshold curve of one criterion.
    Sweep(SweepArgs),
    /// Sweep several criteria and rank them by area under the curve.
    Compare(CompareArgs),
    /// Prune at a threshold and write a new model file.
    Prune(PruneArgs),
    /// Per-layer forward-pass FLOPs.
    Flops(FlopsArgs),
    /// Sweep, prune at the plateau threshold, retrain and evaluate.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// `mnist[:<dir>]` or `cifar10[:<dir or batch file>]`; bare names
    /// resolve under $CPRUNE_DATA_DIR (default `data`).
    #[arg(long)]
    pub data: String,
    /// Samples held out from the end of the training set for validation.
    #[arg(long, default_value_t = 5000)]
    pub validation: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainOpts {
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long)]
    pub no_dropout: bool,
}

impl TrainOpts {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            momentum: self.momentum,
            epochs: self.epochs,
            batch_size: self.batch_size,
            rng_seed: seed,
            dropout: !self.no_dropout,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// `builtin:A|B|C` or a JSON architecture file.
    #[arg(long, conflicts_with = "from", required_unless_present = "from")]
    pub arch: Option<String>,
    /// Continue training an existing model file.
    #[arg(long)]
    pub from: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainOpts,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch metrics CSV; defaults to `<out>.history.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
    /// Write the metric JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepOpts {
    #[arg(long, default_value = "both")]
    pub kinds: String,
    #[arg(long, default_value = "static")]
    pub mode: String,
    #[arg(long, default_value_t = 0.02)]
    pub max_gap: f64,
    #[arg(long, default_value_t = 64)]
    pub max_evals: usize,
    /// `accuracy` or `neg_loss` (exp of the negated mean loss).
    #[arg(long, default_value = "accuracy")]
    pub metric: String,
    /// `filters` or `params`.
    #[arg(long, default_value = "filters")]
    pub x_axis: String,
    #[arg(long)]
    pub t_min: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Validation samples per class used for each evaluation.
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SweepOpts {
    fn config(&self, criterion: Criterion) -> Result<SweepConfig> {
        let mut cfg = SweepConfig::new(criterion);
        cfg.kinds = self.kinds.parse()?;
        cfg.mode = self.mode.parse()?;
        cfg.max_gap = self.max_gap;
        cfg.max_evals = self.max_evals;
        cfg.metric = match self.metric.as_str() {
            "accuracy" => SweepMetric::Accuracy,
            "neg_loss" => SweepMetric::NegLoss,
            other => return Err(Error::Config(format!("unknown metric {other:?}"))),
        };
        cfg.x_axis = match self.x_axis.as_str() {
            "filters" => XAxis::Filters,
            "params" => XAxis::Params,
            other => return Err(Error::Config(format!("unknown x-axis {other:?}"))),
        };
        cfg.domain = match (self.t_min, self.t_max) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            (None, None) => None,
            _ => return Err(Error::Config("--t-min and --t-max go together".into())),
        };
        Ok(cfg)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// `std|range|mean_abs|max_abs|abs_range[:raw|:minmax|:rank]`.
    #[arg(long)]
    pub criterion: String,
    #[command(flatten)]
    pub sweep: SweepOpts,
    /// Curve CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated criteria.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "std:rank,range:rank,mean_abs:rank,max_abs:rank"
    )]
    pub criteria: Vec<String>,
    #[command(flatten)]
    pub sweep: SweepOpts,
    /// Ranking JSON; curve CSVs go next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PruneArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub criterion: String,
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: f64,
    #[arg(long, default_value = "both")]
    pub kinds: String,
    #[arg(long, default_value = "static")]
    pub mode: String,
    /// Allow pruning the final conv/dense layer.
    #[arg(long)]
    pub prune_output_layer: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Report JSON; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FlopsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PipelineArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "std:rank")]
    pub criterion: String,
    #[command(flatten)]
    pub sweep: SweepOpts,
    /// Allowed metric drop from the best sampled point; also caps --max-gap.
    #[arg(long, default_value_t = 0.01)]
    pub drop_tolerance: f64,
    #[command(flatten)]
    pub train: TrainOpts,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses arguments from the process and runs; returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Prune(a) => cmd_prune(&a),
        Command::Flops(a) => cmd_flops(&a),
        Command::Pipeline(a) => cmd_pipeline(&a),
    }
}

fn data_root() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from("data"), PathBuf::from)
}

/// Loaded splits plus the files they came from.
pub fn load_data(args: &DataArgs) -> Result<(Splits, Vec<PathBuf>)> {
    let (kind, path) = match args.data.split_once(':') {
        Some((k, p)) => (k, PathBuf::from(p)),
        None => (args.data.as_str(), data_root().join(&args.data)),
    };
    match kind {
        "mnist" => {
            let files = [MNIST_TRAIN.0, MNIST_TRAIN.1, MNIST_TEST.0, MNIST_TEST.1]
                .map(|f| path.join(f))
                .to_vec();
            let train = load_mnist(&files[0], &files[1])?;
            let test = load_mnist(&files[2], &files[3])?;
            Ok((Splits::new(train, test, args.validation)?, files))
        }
        "cifar10" => {
            let (train_files, test_files) = cifar10_files(&path)?;
            let (train_files, test_files) = if train_files.is_empty() {
                (test_files, Vec::new())
            } else {
                (train_files, test_files)
            };
            let train = load_cifar10(&train_files)?;
            let held = args.validation.min(train.len() / 10).max(1);
            let splits = if test_files.is_empty() {
                let (train, validation) = train.split_at(train.len() - held)?;
                Splits {
                    train,
                    test: validation.clone(),
                    validation,
                }
            } else {
                Splits::new(train, load_cifar10(&test_files)?, held)?
            };
            Ok((splits, [train_files, test_files].concat()))
        }
        other => Err(Error::Config(format!(
            "unknown dataset {other:?}; expected mnist[:<dir>] or cifar10[:<path>]"
        ))),
    }
}

fn input_shape(d: &Dataset) -> [usize; 3] {
    let dims = d.images.dims();
    [dims[1], dims[2], dims[3]]
}

fn arch_spec(arch: &str, data: &Dataset) -> Result<ArchSpec> {
    if let Some(name) = arch.strip_prefix("builtin:") {
        let which: BuiltinArch = name.parse()?;
        return Ok(builtin(which, input_shape(data), data.class_count));
    }
    let text = fs::read_to_string(arch).map_err(|e| Error::io(arch, e))?;
    let spec = ArchSpec::from_json(&text)?;
    if spec.input_shape != input_shape(data) {
        return Err(Error::Config(format!(
            "architecture input {:?} does not match data {:?}",
            spec.input_shape,
            input_shape(data)
        )));
    }
    Ok(spec)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn refuse_overwrite(input: &Path, output: &Path) -> Result<()> {
    if same_file(input, output) {
        return Err(Error::Config(format!(
            "output {} would overwrite the input model",
            output.display()
        )));
    }
    Ok(())
}

fn check_model_matches(model: &Model, data: &Dataset) -> Result<()> {
    if model.input_shape().dims() != input_shape(data) {
        return Err(Error::Config(format!(
            "model input {:?} does not match data {:?}",
            model.input_shape().dims(),
            input_shape(data)
        )));
    }
    Ok(())
}

const EVAL_BATCH: usize = 500;

fn history_csv(rows: &[(Metric, Metric)]) -> String {
    let mut out =
        String::from("epoch,train_accuracy,train_loss,validation_accuracy,validation_loss\n");
    for (i, (t, v)) in rows.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            i + 1,
            t.top1_accuracy,
            t.mean_loss,
            v.top1_accuracy,
            v.mean_loss
        ));
    }
    out
}

/// Trains on the training split, validating after every epoch.
fn fit(model: &mut Model, splits: &Splits, cfg: &TrainConfig) -> Result<Vec<(Metric, Metric)>> {
    let mut rows = Vec::with_capacity(cfg.epochs);
    let val = &splits.validation;
    train_with(
        model,
        &splits.train.images,
        &splits.train.labels,
        cfg,
        |epoch, m, model| {
            let v = evaluate_images(model, &val.images, &val.labels, EVAL_BATCH)?;
            eprintln!(
                "epoch {}: train acc {:.4} loss {:.4}, validation acc {:.4}",
                epoch + 1,
                m.top1_accuracy,
                m.mean_loss,
                v.top1_accuracy
            );
            rows.push((*m, v));
            Ok(())
        },
    )?;
    Ok(rows)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut manifest = RunManifest::new("train", a, Some(a.seed));
    let (splits, files) = load_data(&a.data)?;
    manifest.dataset_inputs(&files)?;
    let mut model = match (&a.arch, &a.from) {
        (_, Some(from)) => {
            refuse_overwrite(from, &a.out)?;
            manifest.input(from)?;
            model::load(from)?
        }
        (Some(arch), None) => {
            let spec = arch_spec(arch, &splits.train)?;
            if !arch.starts_with("builtin:") {
                manifest.input(Path::new(arch))?;
            }
            spec.build(a.seed)?
        }
        (None, None) => return Err(Error::Config("either --arch or --from is required".into())),
    };
    check_model_matches(&model, &splits.train)?;
    let rows = fit(&mut model, &splits, &a.train.config(a.seed))?;
    model::save(&model, &a.out)?;
    let history = a
        .history
        .clone()
        .unwrap_or_else(|| with_suffix(&a.out, ".history.csv"));
    write(&history, &history_csv(&rows))?;
    manifest.output(&a.out)?;
    manifest.output(&history)?;
    manifest.emit(Some(&a.out))
}

fn split(s: &Splits, which: SplitName) -> &Dataset {
    match which {
        SplitName::Train => &s.train,
        SplitName::Validation => &s.validation,
        SplitName::Test => &s.test,
    }
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let mut manifest = RunManifest::new("evaluate", a, None);
    manifest.input(&a.model)?;
    let model = model::load(&a.model)?;
    let (splits, files) = load_data(&a.data)?;
    manifest.dataset_inputs(&files)?;
    let d = split(&splits, a.split);
    check_model_matches(&model, d)?;
    let metric = evaluate_images(&model, &d.images, &d.labels, EVAL_BATCH)?;
    let json = serde_json::to_string_pretty(&metric).expect("metric serializes") + "\n";
    emit_json(&mut manifest, a.out.as_deref(), &json)
}

fn emit_json(manifest: &mut RunManifest, out: Option<&Path>, json: &str) -> Result<()> {
    match out {
        Some(p) => {
            write(p, json)?;
            manifest.output(p)?;
            manifest.emit(Some(p))
        }
        None => {
            print!("{json}");
            manifest.emit(None)
        }
    }
}

fn validation_subset(splits: &Splits, opts: &SweepOpts) -> Result<Dataset> {
    splits.validation.balanced_subset(opts.per_class, opts.seed)
}

#[derive(Serialize)]
struct SweepSummary {
    criterion: String,
    auc: f64,
    evaluations: usize,
    converged: bool,
    max_gap: f64,
    plateau_threshold: Option<f64>,
    plateau_fraction_pruned: Option<f64>,
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let mut manifest = RunManifest::new("sweep", a, Some(a.sweep.seed));
    refuse_overwrite(&a.model, &a.out)?;
    manifest.input(&a.model)?;
    let model = model::load(&a.model)?;
    let cfg = a.sweep.config(a.criterion.parse()?)?;
    let (splits, files) = load_data(&a.data)?;
    manifest.dataset_inputs(&files)?;
    check_model_matches(&model, &splits.validation)?;
    let subset = validation_subset(&splits, &a.sweep)?;
    let mut eval = DatasetEvaluator {
        images: &subset.images,
        labels: &subset.labels,
        metric: cfg.metric,
        batch_size: EVAL_BATCH,
    };
    let curve = build_curve(&model, &cfg, &mut eval)?;
    write(&a.out, &curve.to_csv())?;
    let plateau = curve.plateau(0.01);
    let summary = SweepSummary {
        criterion: curve.criterion.clone(),
        auc: curve.auc(),
        evaluations: curve.evaluations(),
        converged: curve.converged,
        max_gap: curve.max_gap,
        plateau_threshold: plateau.map(|p| p.threshold),
        plateau_fraction_pruned: plateau.map(|p| p.fraction_pruned),
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    );
    manifest.output(&a.out)?;
    manifest.emit(Some(&a.out))
}

fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let mut manifest = RunManifest::new("compare", a, Some(a.sweep.seed));
    manifest.input(&a.model)?;
    let model = model::load(&a.model)?;
    let cfgs = a
        .criteria
        .iter()
        .map(|c| a.sweep.config(c.parse()?))
        .collect::<Result<Vec<_>>>()?;
    let (splits, files) = load_data(&a.data)?;
    manifest.dataset_inputs(&files)?;
    check_model_matches(&model, &splits.validation)?;
    let subset = validation_subset(&splits, &a.sweep)?;
    let mut eval = DatasetEvaluator {
        images: &subset.images,
        labels: &subset.labels,
        metric: cfgs[0].metric,
        batch_size: EVAL_BATCH,
    };
    let (entries, curves) = compare_criteria(&model, &cfgs, &mut eval)?;
    print!("{}", ranking_table(&entries));
    if let Some(out) = &a.out {
        refuse_overwrite(&a.model, out)?;
        write(
            out,
            &(serde_json::to_string_pretty(&entries).expect("ranking serializes") + "\n"),
        )?;
        manifest.output(out)?;
        for c in &curves {
            let csv = with_suffix(out, &format!(".{}.csv", c.criterion.replace(':', "_")));
            write(&csv, &c.to_csv())?;
            manifest.output(&csv)?;
        }
        manifest.emit(Some(out))
    } else {
        manifest.emit(None)
    }
}

fn cmd_prune(a: &PruneArgs) -> Result<()> {
    let mut manifest = RunManifest::new("prune", a, None);
    refuse_overwrite(&a.model, &a.out)?;
    let report_path = a
        .report
        .clone()
        .unwrap_or_else(|| with_suffix(&a.out, ".report.json"));
    refuse_overwrite(&a.model, &report_path)?;
    manifest.input(&a.model)?;
    let mut model = model::load(&a.model)?;
    let cfg = PruneConfig {
        criterion: a.criterion.parse()?,
        threshold: a.threshold,
        mode: a.mode.parse::<ApplicationMode>()?,
        kinds: a.kinds.parse::<LayerSelection>()?,
        protect_output_layer: !a.prune_output_layer,
    };
    let report = prune(&mut model, &cfg)?;
    model::save(&model, &a.out)?;
    write(&report_path, &(report.to_json() + "\n"))?;
    eprintln!(
        "removed {} of {} filters ({:.2}%), FLOPs {} -> {}",
        report.filters_removed,
        report.prunable_filters,
        100.0 * report.fraction_pruned,
        report.flops_before,
        report.flops_after
    );
    manifest.output(&a.out)?;
    manifest.output(&report_path)?;
    manifest.emit(Some(&a.out))
}

fn cmd_flops(a: &FlopsArgs) -> Result<()> {
    let mut manifest = RunManifest::new("flops", a, None);
    manifest.input(&a.model)?;
    let model = model::load(&a.model)?;
    let report = model_flops(&model)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    if let Some(out) = &a.out {
        refuse_overwrite(&a.model, out)?;
    }
    emit_json(&mut manifest, a.out.as_deref(), &json)
}

#[derive(Serialize)]
struct PipelineReport {
    criterion: String,
    auc: f64,
    threshold: f64,
    fraction_pruned: f64,
    flops_before: u64,
    flops_after: u64,
    flops_reduction: f64,
    test_before: Metric,
    test_after_prune: Metric,
    test_after_retrain: Metric,
}

fn cmd_pipeline(a: &PipelineArgs) -> Result<()> {
    let mut manifest = RunManifest::new("pipeline", a, Some(a.sweep.seed));
    refuse_overwrite(&a.model, &a.out)?;
    manifest.input(&a.model)?;
    let model = model::load(&a.model)?;
    let criterion: Criterion = a.criterion.parse()?;
    let mut cfg = a.sweep.config(criterion.clone())?;
    // the plateau is read off sampled points, so sample at least that finely
    cfg.max_gap = cfg.max_gap.min(a.drop_tolerance);
    let (splits, files) = load_data(&a.data)?;
    manifest.dataset_inputs(&files)?;
    check_model_matches(&model, &splits.validation)?;
    let subset = validation_subset(&splits, &a.sweep)?;
    let mut eval = DatasetEvaluator {
        images: &subset.images,
        labels: &subset.labels,
        metric: cfg.metric,
        batch_size: EVAL_BATCH,
    };
    let curve = build_curve(&model, &cfg, &mut eval)?;
    let knee = curve
        .plateau(a.drop_tolerance)
        .ok_or_else(|| Error::Numerics("empty threshold curve".into()))?;
    let test = &splits.test;
    let test_before = evaluate_images(&model, &test.images, &test.labels, EVAL_BATCH)?;
    let mut pruned = model.clone();
    let report = prune(
        &mut pruned,
        &PruneConfig {
            criterion,
            threshold: knee.threshold,
            mode: cfg.mode,
            kinds: cfg.kinds,
            protect_output_layer: cfg.protect_output_layer,
        },
    )?;
    let test_after_prune = evaluate_images(&pruned, &test.images, &test.labels, EVAL_BATCH)?;
    fit(&mut pruned, &splits, &a.train.config(a.sweep.seed))?;
    let test_after_retrain = evaluate_images(&pruned, &test.images, &test.labels, EVAL_BATCH)?;
    model::save(&pruned, &a.out)?;
    let summary = PipelineReport {
        criterion: curve.criterion.clone(),
        auc: curve.auc(),
        threshold: knee.threshold,
        fraction_pruned: report.fraction_pruned,
        flops_before: report.flops_before,
        flops_after: report.flops_after,
        flops_reduction: reduction(report.flops_before, report.flops_after),
        test_before,
        test_after_prune,
        test_after_retrain,
    };
    let summary_path = with_suffix(&a.out, ".pipeline.json");
    write(
        &summary_path,
        &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
    )?;
    write(&with_suffix(&a.out, ".curve.csv"), &curve.to_csv())?;
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    );
    manifest.output(&a.out)?;
    manifest.output(&summary_path)?;
    manifest.emit(Some(&a.out))
}
