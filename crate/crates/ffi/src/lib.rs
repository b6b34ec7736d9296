//! C ABI over `cprune`.
//!
//! Models and datasets cross the boundary as opaque handles. A handle made by
//! a `*_load` or `*_build` call is released by the matching `*_free`. Every
//! fallible call returns a [`CpStatus`]. On failure the message is kept per
//! thread and read with [`cp_last_error`]. Strings returned through
//! out-pointers belong to the caller and are released with
//! [`cp_string_free`]. Panics are caught and never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cprune::cli::{load_data, DataArgs};
use cprune::criterion::ApplicationMode;
use cprune::data::{Dataset, Splits};
use cprune::engine::{evaluate_images, forward};
use cprune::flops::model_flops;
use cprune::model::{self, builtin, BuiltinArch, Model};
use cprune::pruner::{prune, LayerSelection};
use cprune::sweep::{build_curve, DatasetEvaluator, SweepConfig};
use cprune::{Error, Tensor};

const EVAL_BATCH: usize = 256;

/// Result of every fallible call. `CP_STATUS_OK` is zero.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CpStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    Config = 3,
    Shape = 4,
    Index = 5,
    Domain = 6,
    Numerics = 7,
    Format = 8,
    Io = 9,
    NothingToPrune = 10,
    InsufficientData = 11,
    /// A Rust panic was caught; the handles involved are left as they were
    /// when it happened.
    Panic = 12,
}

/// Which part of a dataset to read.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CpSplit {
    Train = 0,
    Validation = 1,
    Test = 2,
}

/// An owned model; f32 weights.
pub struct CpModel(Model);

/// Train, validation and test splits loaded together.
pub struct CpDataset(Splits);

impl CpDataset {
    fn split(&self, s: CpSplit) -> &Dataset {
        match s {
            CpSplit::Train => &self.0.train,
            CpSplit::Validation => &self.0.validation,
            CpSplit::Test => &self.0.test,
        }
    }
}

struct Failure {
    status: CpStatus,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Index(_) | Error::EmptyAxis { .. } => CpStatus::Index,
            Error::Shape(_) | Error::LayerShape { .. } => CpStatus::Shape,
            Error::Kind { .. } | Error::Config(_) => CpStatus::Config,
            Error::Domain(_) => CpStatus::Domain,
            Error::Numerics(_) => CpStatus::Numerics,
            Error::Format(_) => CpStatus::Format,
            Error::NothingToPrune => CpStatus::NothingToPrune,
            Error::InsufficientData { .. } => CpStatus::InsufficientData,
            Error::Io { .. } => CpStatus::Io,
        };
        Failure {
            status,
            message: e.to_string(),
        }
    }
}

fn fail(status: CpStatus, message: impl Into<String>) -> Failure {
    Failure {
        status,
        message: message.into(),
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    // interior NULs cannot be represented; cut the message there
    let bytes: Vec<u8> = message
        .into_bytes()
        .into_iter()
        .take_while(|&b| b != 0)
        .collect();
    let c = CString::new(bytes).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CpStatus::Ok,
        Ok(Err(e)) => {
            set_last_error(e.message);
            e.status
        }
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {what}"));
            CpStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(CpStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| fail(CpStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(CpStatus::NullArgument, format!("{name} is null")))
}

unsafe fn mut_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(CpStatus::NullArgument, format!("{name} is null")))
}

fn c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|e| fail(CpStatus::Format, format!("string with interior NUL: {e}")))
}

/// Message of the last failed call on this thread, or NULL if none failed.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cp_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` is NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Reads a model file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cp_model_load(path: *const c_char, out: *mut *mut CpModel) -> CpStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        let m = model::load(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(CpModel(m)));
        Ok(())
    })
}

/// Builds a freshly initialized built-in architecture (`"A"`, `"B"` or
/// `"C"`) for `rows x cols x channels` inputs.
///
/// # Safety
/// `name` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cp_model_build(
    name: *const c_char,
    rows: usize,
    cols: usize,
    channels: usize,
    classes: usize,
    seed: u64,
    out: *mut *mut CpModel,
) -> CpStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        let arch: BuiltinArch = str_arg(name, "name")?.parse()?;
        let m = builtin(arch, [rows, cols, channels], classes).build(seed)?;
        *out = Box::into_raw(Box::new(CpModel(m)));
        Ok(())
    })
}

/// Writes a model file.
///
/// # Safety
/// `model` is a live handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cp_model_save(model: *const CpModel, path: *const c_char) -> CpStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        model::save(&m.0, str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` is NULL or a live handle, which must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cp_model_free(model: *mut CpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of trainable parameters.
///
/// # Safety
/// `model` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cp_model_param_count(model: *const CpModel, out: *mut u64) -> CpStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        *mut_arg(out, "out")? = m.0.param_count() as u64;
        Ok(())
    })
}

/// Input shape as `{rows, cols, channels}`.
///
/// # Safety
/// `model` is a live handle; `out` points to 3 writable elements.
#[no_mangle]
pub unsafe extern "C" fn cp_model_input_shape(model: *const CpModel, out: *mut usize) -> CpStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        if out.is_null() {
            return Err(fail(CpStatus::NullArgument, "out is null"));
        }
        let dims = m.0.input_shape().dims();
        ptr::copy_nonoverlapping(dims.as_ptr(), out, dims.len().min(3));
        Ok(())
    })
}

/// Width of one output row (the class count for a classifier).
///
/// # Safety
/// `model` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cp_model_output_width(model: *const CpModel, out: *mut usize) -> CpStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        *mut_arg(out, "out")? = m.0.output_width()?;
        Ok(())
    })
}

/// Multiply-accumulate FLOPs of one forward pass of one sample.
///
/// # Safety
/// `model` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cp_model_flops(model: *const CpModel, out: *mut u64) -> CpStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        *mut_arg(out, "out")? = model_flops(&m.0)?.total;
        Ok(())
    })
}

/// Inference on `n` samples laid out `(n, rows, cols, channels)` row-major.
/// Writes `n * output_width` probabilities to `outputs`; `outputs_len` must
/// equal that count.
///
/// # Safety
/// `inputs` holds `n * rows * cols * channels` readable floats; `outputs`
/// holds `outputs_len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn cp_model_forward(
    model: *const CpModel,
    inputs: *const f32,
    n: usize,
    outputs: *mut f32,
    outputs_len: usize,
) -> CpStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        if inputs.is_null() || outputs.is_null() {
            return Err(fail(CpStatus::NullArgument, "inputs or outputs is null"));
        }
        let width = m.0.output_width()?;
        if outputs_len != n * width {
            return Err(fail(
                CpStatus::Shape,
                format!("outputs_len {outputs_len} but {n} samples x {width} outputs"),
            ));
        }
        let mut dims = vec![n];
        dims.extend_from_slice(m.0.input_shape().dims());
        let len: usize = dims.iter().product();
        let x = Tensor::from_vec(dims, std::slice::from_raw_parts(inputs, len).to_vec())?;
        let y = forward(&m.0, &x)?;
        std::slice::from_raw_parts_mut(outputs, outputs_len).copy_from_slice(y.data());
        Ok(())
    })
}

/// Prunes `model` in place: filters scoring strictly below `threshold`
/// under `criterion` (e.g. `"std:rank"`) are removed. `kinds` is `"conv"`,
/// `"dense"` or `"both"`; NULL means both. When `report_json` is not NULL
/// it receives the pruning report, to be released with [`cp_string_free`].
/// On failure the model is unchanged.
///
/// # Safety
/// `model` is a live handle; string arguments are NUL-terminated or NULL
/// where allowed; `report_json` is NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn cp_model_prune(
    model: *mut CpModel,
    criterion: *const c_char,
    threshold: f64,
    kinds: *const c_char,
    progressive: bool,
    protect_output_layer: bool,
    report_json: *mut *mut c_char,
) -> CpStatus {
    guard(|| {
        let m = mut_arg(model, "model")?;
        let mut cfg = SweepConfig::new(str_arg(criterion, "criterion")?.parse()?);
        cfg.kinds = parse_kinds(kinds)?;
        cfg.protect_output_layer = protect_output_layer;
        if progressive {
            cfg.mode = ApplicationMode::Progressive;
        }
        // work on a copy so a failure leaves the caller's model intact
        let mut work = m.0.clone();
        let report = prune(&mut work, &cfg.prune_config(threshold))?;
        if let Some(out) = report_json.as_mut() {
            *out = c_string(report.to_json())?;
        }
        m.0 = work;
        Ok(())
    })
}

unsafe fn parse_kinds(kinds: *const c_char) -> Result<LayerSelection, Failure> {
    Ok(match opt_str_arg(kinds, "kinds")? {
        Some(s) => s.parse()?,
        None => LayerSelection::Both,
    })
}

/// Loads a dataset. `source` is `mnist:<dir>` or `cifar10:<dir or batch
/// file>`; the last `validation` training samples are held out.
///
/// # Safety
/// `source` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cp_dataset_load(
    source: *const c_char,
    validation: usize,
    out: *mut *mut CpDataset,
) -> CpStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        let args = DataArgs {
            data: str_arg(source, "source")?.to_string(),
            validation,
        };
        let (splits, _) = load_data(&args)?;
        *out = Box::into_raw(Box::new(CpDataset(splits)));
        Ok(())
    })
}

/// Releases a dataset. NULL is ignored.
///
/// # Safety
/// `dataset` is NULL or a live handle, which must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cp_dataset_free(dataset: *mut CpDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of samples in one split.
///
/// # Safety
/// `dataset` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cp_dataset_len(
    dataset: *const CpDataset,
    split: CpSplit,
    out: *mut usize,
) -> CpStatus {
    guard(|| {
        let d = ref_arg(dataset, "dataset")?;
        *mut_arg(out, "out")? = d.split(split).len();
        Ok(())
    })
}

/// Top-1 accuracy and mean cross-entropy of `model` on one split. Either
/// out-pointer may be NULL.
///
/// # Safety
/// `model` and `dataset` are live handles; out-pointers are NULL or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn cp_evaluate(
    model: *const CpModel,
    dataset: *const CpDataset,
    split: CpSplit,
    accuracy: *mut f64,
    mean_loss: *mut f64,
) -> CpStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let d = ref_arg(dataset, "dataset")?.split(split);
        let metric = evaluate_images(&m.0, &d.images, &d.labels, EVAL_BATCH)?;
        if let Some(a) = accuracy.as_mut() {
            *a = metric.top1_accuracy;
        }
        if let Some(l) = mean_loss.as_mut() {
            *l = metric.mean_loss;
        }
        Ok(())
    })
}

/// Sweeps the pruning threshold of `criterion` over the model's score range
/// and writes the area under the accuracy curve to `auc`. The metric is
/// validation accuracy on `per_class` samples per class drawn with `seed`,
/// or on the whole validation split when `per_class` is 0. `model` is not
/// modified. When `curve_csv` is not NULL it receives the sampled curve as
/// CSV, to be released with [`cp_string_free`].
///
/// # Safety
/// `model` and `dataset` are live handles; `criterion` is NUL-terminated;
/// `kinds` is NULL or NUL-terminated; `auc` is writable; `curve_csv` is NULL
/// or writable.
#[no_mangle]
pub unsafe extern "C" fn cp_sweep(
    model: *const CpModel,
    dataset: *const CpDataset,
    criterion: *const c_char,
    kinds: *const c_char,
    max_gap: f64,
    max_evals: usize,
    per_class: usize,
    seed: u64,
    auc: *mut f64,
    curve_csv: *mut *mut c_char,
) -> CpStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let d = ref_arg(dataset, "dataset")?;
        let auc = mut_arg(auc, "auc")?;
        let mut cfg = SweepConfig::new(str_arg(criterion, "criterion")?.parse()?);
        cfg.kinds = parse_kinds(kinds)?;
        cfg.max_gap = max_gap;
        cfg.max_evals = max_evals;
        let subset;
        let eval_set = if per_class == 0 {
            &d.0.validation
        } else {
            subset = d.0.validation.balanced_subset(per_class, seed)?;
            &subset
        };
        let mut eval = DatasetEvaluator {
            images: &eval_set.images,
            labels: &eval_set.labels,
            metric: Default::default(),
            batch_size: EVAL_BATCH,
        };
        let curve = build_curve(&m.0, &cfg, &mut eval)?;
        *auc = curve.auc();
        if let Some(out) = curve_csv.as_mut() {
            *out = c_string(curve.to_csv())?;
        }
        Ok(())
    })
}
