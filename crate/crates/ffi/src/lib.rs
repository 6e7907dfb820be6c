//! C ABI over `welllog_ssl`.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every fallible call returns a
//! [`WlsStatus`]; on failure the message is available from
//! [`wls_last_error`] on the same thread until the next failing call.
//! Strings returned by the library are released with [`wls_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use welllog_ssl::dataset::{load_csv, normalize, CsvSchema, Dataset, LabelSet};
use welllog_ssl::eval::balance_factor;
use welllog_ssl::mlp::{MlpConfig, MlpModel};
use welllog_ssl::selftrain::{run_selftrain, SelfTrainConfig, SelfTrainOutcome, Strength};
use welllog_ssl::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WlsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Domain = 5,
    Panic = 6,
}

/// Opaque dataset handle.
pub struct WlsDataset(Dataset);

/// Opaque network handle.
pub struct WlsModel(MlpModel);

/// Opaque self-training result handle.
pub struct WlsSelfTrainResult(SelfTrainOutcome);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> WlsStatus {
    match e {
        Error::Io { .. } => WlsStatus::Io,
        Error::Csv(_)
        | Error::Json(_)
        | Error::RaggedRow { .. }
        | Error::NonNumeric { .. }
        | Error::NonFinite { .. }
        | Error::UnknownLabel { .. }
        | Error::MissingColumn(_) => WlsStatus::Parse,
        Error::InvalidConfig(_)
        | Error::DimensionMismatch { .. }
        | Error::LengthMismatch { .. } => WlsStatus::InvalidArgument,
        _ => WlsStatus::Domain,
    }
}

fn fail(e: Error) -> WlsStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> WlsStatus {
    set_error(format!("{what} is null"));
    WlsStatus::NullPointer
}

/// Runs `f`, turning panics into [`WlsStatus::Panic`].
fn guard(f: impl FnOnce() -> WlsStatus) -> WlsStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| {
        set_error("internal panic");
        WlsStatus::Panic
    })
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, WlsStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        WlsStatus::InvalidArgument
    })
}

unsafe fn labels_arg(p: *const c_char) -> Result<LabelSet, WlsStatus> {
    if p.is_null() {
        return Ok(LabelSet::dwio());
    }
    let s = str_arg(p, "labels")?;
    LabelSet::new(s.split(',').map(str::trim)).map_err(fail)
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! handle {
    ($p:expr, $what:expr) => {
        match $p.as_ref() {
            Some(h) => h,
            None => return null($what),
        }
    };
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wls_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn wls_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a dataset CSV. `label_column` may be null for unlabelled files;
/// `labels` is a comma-separated class list, null meaning `D,W,I,O`.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wls_dataset_load_csv(
    path: *const c_char,
    label_column: *const c_char,
    labels: *const c_char,
    out: *mut *mut WlsDataset,
) -> WlsStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let path = try_ffi!(str_arg(path, "path"));
        let column = if label_column.is_null() {
            None
        } else {
            Some(try_ffi!(str_arg(label_column, "label_column")))
        };
        let labels = try_ffi!(labels_arg(labels));
        match load_csv(path, &CsvSchema::new(None, column, labels)) {
            Ok(d) => {
                *out = Box::into_raw(Box::new(WlsDataset(d)));
                WlsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `d` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn wls_dataset_free(d: *mut WlsDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Sample count; 0 for null.
///
/// # Safety
/// `d` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wls_dataset_len(d: *const WlsDataset) -> usize {
    d.as_ref().map_or(0, |d| d.0.len())
}

/// Feature count; 0 for null.
///
/// # Safety
/// `d` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wls_dataset_dim(d: *const WlsDataset) -> usize {
    d.as_ref().map_or(0, |d| d.0.dim())
}

/// Min-max normalizes both datasets in place using statistics over their union.
///
/// # Safety
/// Both pointers must be live, distinct handles.
#[no_mangle]
pub unsafe extern "C" fn wls_dataset_normalize_pair(
    labeled: *mut WlsDataset,
    pool: *mut WlsDataset,
) -> WlsStatus {
    guard(|| {
        let (Some(a), Some(b)) = (labeled.as_mut(), pool.as_mut()) else {
            return null("dataset");
        };
        let params = match a.0.concat(&b.0).and_then(|all| normalize(&all)) {
            Ok((_, p)) => p,
            Err(e) => return fail(e),
        };
        match (params.apply(&a.0), params.apply(&b.0)) {
            (Ok(x), Ok(y)) => {
                a.0 = x;
                b.0 = y;
                WlsStatus::Ok
            }
            (Err(e), _) | (_, Err(e)) => fail(e),
        }
    })
}

/// New network with default hidden width and learning-rate scales.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wls_model_new(
    input_dim: usize,
    classes: usize,
    epochs: usize,
    seed: u64,
    out: *mut *mut WlsModel,
) -> WlsStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let cfg = MlpConfig::new(input_dim, classes)
            .with_epochs(epochs)
            .with_seed(seed);
        match MlpModel::init(cfg) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(WlsModel(m)));
                WlsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wls_model_free(m: *mut WlsModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Trains on a fully labelled dataset; writes epochs run to `out_epochs` if non-null.
///
/// # Safety
/// Handles must be live; `out_epochs` null or writable.
#[no_mangle]
pub unsafe extern "C" fn wls_model_train(
    m: *mut WlsModel,
    data: *const WlsDataset,
    out_epochs: *mut usize,
) -> WlsStatus {
    guard(|| {
        let Some(m) = m.as_mut() else {
            return null("model");
        };
        let d = handle!(data, "dataset");
        match m.0.train(&d.0) {
            Ok(t) => {
                if !out_epochs.is_null() {
                    *out_epochs = t.epochs_run;
                }
                WlsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Class posteriors for one feature vector. `probs` must hold `probs_len`
/// values and `probs_len` must equal the class count.
///
/// # Safety
/// `x` must point to `x_len` doubles and `probs` to `probs_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wls_model_predict_proba(
    m: *const WlsModel,
    x: *const f64,
    x_len: usize,
    probs: *mut f64,
    probs_len: usize,
) -> WlsStatus {
    guard(|| {
        let m = handle!(m, "model");
        if x.is_null() {
            return null("x");
        }
        if probs.is_null() {
            return null("probs");
        }
        if probs_len != m.0.classes() {
            set_error(format!("probs_len must be {}", m.0.classes()));
            return WlsStatus::InvalidArgument;
        }
        let xs = std::slice::from_raw_parts(x, x_len);
        match m.0.predict_proba(xs) {
            Ok(p) => {
                std::slice::from_raw_parts_mut(probs, probs_len).copy_from_slice(p.probs());
                WlsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Serializes the network as JSON; free the string with [`wls_string_free`].
///
/// # Safety
/// `m` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wls_model_to_json(m: *const WlsModel, out: *mut *mut c_char) -> WlsStatus {
    guard(|| {
        let m = handle!(m, "model");
        if out.is_null() {
            return null("out");
        }
        match m.0.to_json() {
            Ok(s) => {
                *out = CString::new(s).expect("json has no NUL").into_raw();
                WlsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Restores a network from [`wls_model_to_json`] output.
///
/// # Safety
/// `json` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wls_model_from_json(
    json: *const c_char,
    out: *mut *mut WlsModel,
) -> WlsStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let s = try_ffi!(str_arg(json, "json"));
        match MlpModel::from_json(s) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(WlsModel(m)));
                WlsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Self-trains with the default policy schedule.
///
/// # Safety
/// Dataset handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wls_selftrain_run(
    labeled: *const WlsDataset,
    pool: *const WlsDataset,
    epochs: usize,
    seed: u64,
    out: *mut *mut WlsSelfTrainResult,
) -> WlsStatus {
    guard(|| {
        let l = handle!(labeled, "labeled");
        let p = handle!(pool, "pool");
        if out.is_null() {
            return null("out");
        }
        let mlp = MlpConfig::new(l.0.dim(), l.0.num_classes()).with_epochs(epochs);
        let mut cfg = SelfTrainConfig::new(mlp, l.0.labels());
        cfg.seed = seed;
        match run_selftrain(&l.0, &p.0, &cfg, None) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(WlsSelfTrainResult(r)));
                WlsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wls_selftrain_free(r: *mut WlsSelfTrainResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Pool size covered by the assignment; 0 for null.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wls_selftrain_len(r: *const WlsSelfTrainResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.assignment.len())
}

/// Number of update steps run; 0 for null.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wls_selftrain_steps(r: *const WlsSelfTrainResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.trace.len())
}

/// Label index, max posterior and strength (1 strong, 0 weak) of pool sample
/// `index`. Any output pointer may be null.
///
/// # Safety
/// `r` must be live; non-null outputs writable.
#[no_mangle]
pub unsafe extern "C" fn wls_selftrain_assignment(
    r: *const WlsSelfTrainResult,
    index: usize,
    out_label: *mut usize,
    out_max_prob: *mut f64,
    out_strong: *mut u8,
) -> WlsStatus {
    guard(|| {
        let r = handle!(r, "result");
        let Some(a) = r.0.assignment.get(index) else {
            set_error(format!("index {index} out of range"));
            return WlsStatus::InvalidArgument;
        };
        if !out_label.is_null() {
            *out_label = a.label.0;
        }
        if !out_max_prob.is_null() {
            *out_max_prob = a.max_prob;
        }
        if !out_strong.is_null() {
            *out_strong = u8::from(a.strength == Strength::Strong);
        }
        WlsStatus::Ok
    })
}

/// Copy of the final network; free it with [`wls_model_free`].
///
/// # Safety
/// `r` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wls_selftrain_model(
    r: *const WlsSelfTrainResult,
    out: *mut *mut WlsModel,
) -> WlsStatus {
    guard(|| {
        let r = handle!(r, "result");
        if out.is_null() {
            return null("out");
        }
        *out = Box::into_raw(Box::new(WlsModel(r.0.model.clone())));
        WlsStatus::Ok
    })
}

/// Smallest over largest class count.
///
/// # Safety
/// `counts` must point to `len` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wls_balance_factor(
    counts: *const usize,
    len: usize,
    out: *mut f64,
) -> WlsStatus {
    guard(|| {
        if counts.is_null() {
            return null("counts");
        }
        if out.is_null() {
            return null("out");
        }
        match balance_factor(std::slice::from_raw_parts(counts, len)) {
            Ok(b) => {
                *out = b;
                WlsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
