//! C interface to the ecgalarm feature extractors and boosted-tree models.
//!
//! Every function returns an `EA_*` status code. On failure a message is
//! available from `ea_last_error` on the same thread until the next call.
//! Signals are lead II in mV; any sampling rate is resampled to 250 Hz.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use ecgalarm::clustering::{kmeans_best_of, record_seed, Clustering, Metric, DEFAULT_K};
use ecgalarm::dwt_features::{dwt_features, N_DWT};
use ecgalarm::ensemble::BoostedEnsemble;
use ecgalarm::evaluation::roc_auc;
use ecgalarm::feature_synthesis::{synthesize, N_HLF};
use ecgalarm::record_io::{resample, AlarmType, Label, TARGET_FS};
use ecgalarm::segment_features::{heart_rate, llf_tail, segment_features, SegmentFeatureMatrix, N_LLF, N_SEGMENT_FEATURES};
use ecgalarm::segmentation::{detect_r_peaks, segment};
use ecgalarm::Error;

pub const EA_OK: i32 = 0;
/// A required pointer argument was null.
pub const EA_ERR_NULL: i32 = 1;
/// An argument is out of range or has the wrong dimension.
pub const EA_ERR_INVALID: i32 = 2;
/// The output buffer is smaller than the result.
pub const EA_ERR_BUFFER: i32 = 3;
pub const EA_ERR_IO: i32 = 4;
/// A file or model could not be parsed.
pub const EA_ERR_PARSE: i32 = 5;
/// The input is empty or too short.
pub const EA_ERR_EMPTY: i32 = 6;
/// Both classes are required.
pub const EA_ERR_CLASS: i32 = 7;
pub const EA_ERR_PANIC: i32 = 8;
pub const EA_ERR_INTERNAL: i32 = 9;

pub const EA_METRIC_CITYBLOCK: i32 = 0;
pub const EA_METRIC_SQEUCLIDEAN: i32 = 1;

/// Opaque handle to a loaded model.
pub struct EaModel {
    inner: BoostedEnsemble,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } => EA_ERR_IO,
            Error::Parse { .. } | Error::Model(_) | Error::Csv(_) | Error::Json(_) => EA_ERR_PARSE,
            Error::EmptySignal | Error::EmptyBeats | Error::EmptyInput | Error::EmptyBand | Error::SignalTooShort { .. } => EA_ERR_EMPTY,
            Error::Dimension { .. } | Error::Config(_) => EA_ERR_INVALID,
            Error::SingleClass | Error::UndefinedAuc => EA_ERR_CLASS,
            _ => EA_ERR_INTERNAL,
        };
        Failure(code, e.to_string())
    }
}

fn fail(code: i32, msg: impl Into<String>) -> Failure {
    Failure(code, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EA_OK,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            EA_ERR_PANIC
        }
    }
}

unsafe fn input<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(EA_ERR_NULL, format!("{what} is null")));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn output<'a, T>(p: *mut T, cap: usize, need: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(fail(EA_ERR_NULL, format!("{what} is null")));
    }
    if cap < need {
        return Err(fail(EA_ERR_BUFFER, format!("{what} holds {cap}, need {need}")));
    }
    Ok(slice::from_raw_parts_mut(p, need))
}

fn signal_at_250(samples: &[f64], fs: f64) -> Result<Vec<f64>, Failure> {
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(fail(EA_ERR_INVALID, format!("bad sampling rate {fs}")));
    }
    if samples.is_empty() {
        return Err(fail(EA_ERR_EMPTY, "empty signal"));
    }
    Ok(resample(samples, fs, TARGET_FS))
}

fn alarm(code: i32) -> Result<AlarmType, Failure> {
    usize::try_from(code)
        .ok()
        .and_then(|i| AlarmType::ALL.get(i).copied())
        .ok_or_else(|| fail(EA_ERR_INVALID, format!("alarm type {code} not in 0..5")))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next `ea_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ea_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn ea_hlf_len() -> usize {
    N_HLF
}

#[no_mangle]
pub extern "C" fn ea_llf_len() -> usize {
    N_LLF
}

#[no_mangle]
pub extern "C" fn ea_dwt_len() -> usize {
    N_DWT
}

/// R-peak sample indices at 250 Hz. `*out_len` receives the peak count even
/// when `out` is too small.
///
/// # Safety
/// `samples` must point to `n` doubles and `out` to `cap` writable `size_t`.
#[no_mangle]
pub unsafe extern "C" fn ea_detect_r_peaks(samples: *const f64, n: usize, fs: f64, out: *mut usize, cap: usize, out_len: *mut usize) -> i32 {
    guard(|| {
        let x = signal_at_250(input(samples, n, "samples")?, fs)?;
        if out_len.is_null() {
            return Err(fail(EA_ERR_NULL, "out_len is null"));
        }
        let peaks = detect_r_peaks(&x, TARGET_FS);
        *out_len = peaks.len();
        output(out, cap, peaks.len(), "out")?.copy_from_slice(&peaks);
        Ok(())
    })
}

/// The 31 high-level features. `alarm_type` is 0..5 for ASY, EBR, ETC, VTA,
/// VFB; `metric` is one of `EA_METRIC_*`.
///
/// # Safety
/// `samples` must point to `n` doubles and `out` to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ea_hlf_features(
    samples: *const f64,
    n: usize,
    fs: f64,
    alarm_type: i32,
    metric: i32,
    seed: u64,
    out: *mut f64,
    cap: usize,
) -> i32 {
    guard(|| {
        let x = signal_at_250(input(samples, n, "samples")?, fs)?;
        let alarm_type = alarm(alarm_type)?;
        let metric = match metric {
            EA_METRIC_CITYBLOCK => Metric::Cityblock,
            EA_METRIC_SQEUCLIDEAN => Metric::SqEuclidean,
            m => return Err(fail(EA_ERR_INVALID, format!("metric {m} unknown"))),
        };
        let out = output(out, cap, N_HLF, "out")?;
        let beats = segment("signal", &x, TARGET_FS);
        let segs = match segment_features(&beats) {
            Ok(m) => m,
            Err(Error::EmptyBeats) => SegmentFeatureMatrix::empty("signal"),
            Err(e) => return Err(e.into()),
        };
        let seed = record_seed(seed, "signal");
        let clustering = if segs.n_segments() == 0 {
            Clustering::empty(metric, N_SEGMENT_FEATURES, seed)
        } else {
            kmeans_best_of(&segs.rows, DEFAULT_K, metric, seed, 1)?
        };
        let v = synthesize("signal", &clustering, heart_rate(&beats), alarm_type, None)?;
        out.copy_from_slice(&v.values);
        Ok(())
    })
}

/// The 588 features of the last seven segments, zero-padded.
///
/// # Safety
/// `samples` must point to `n` doubles and `out` to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ea_llf_features(samples: *const f64, n: usize, fs: f64, out: *mut f64, cap: usize) -> i32 {
    guard(|| {
        let x = signal_at_250(input(samples, n, "samples")?, fs)?;
        let out = output(out, cap, N_LLF, "out")?;
        let beats = segment("signal", &x, TARGET_FS);
        let segs = match segment_features(&beats) {
            Ok(m) => m,
            Err(Error::EmptyBeats) => SegmentFeatureMatrix::empty("signal"),
            Err(e) => return Err(e.into()),
        };
        out.copy_from_slice(&llf_tail(&segs).values);
        Ok(())
    })
}

/// The 120 wavelet features. Needs at least 64 samples after resampling.
///
/// # Safety
/// `samples` must point to `n` doubles and `out` to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ea_dwt_features(samples: *const f64, n: usize, fs: f64, out: *mut f64, cap: usize) -> i32 {
    guard(|| {
        let x = signal_at_250(input(samples, n, "samples")?, fs)?;
        let out = output(out, cap, N_DWT, "out")?;
        out.copy_from_slice(&dwt_features("signal", &x, None)?.values);
        Ok(())
    })
}

/// Loads a model file written by the pipeline. Free with `ea_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ea_model_load(path: *const c_char, out: *mut *mut EaModel) -> i32 {
    guard(|| {
        if path.is_null() || out.is_null() {
            return Err(fail(EA_ERR_NULL, "path or out is null"));
        }
        *out = ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(EA_ERR_INVALID, "path is not UTF-8"))?;
        let inner = BoostedEnsemble::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(EaModel { inner }));
        Ok(())
    })
}

/// Feature count the model expects, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle from `ea_model_load`.
#[no_mangle]
pub unsafe extern "C" fn ea_model_n_features(model: *const EaModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.n_features())
}

/// Ensemble score; positive means true alarm.
///
/// # Safety
/// `model` must be a live handle, `x` must point to `n` doubles and `score`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn ea_model_score(model: *const EaModel, x: *const f64, n: usize, score: *mut f64) -> i32 {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| fail(EA_ERR_NULL, "model is null"))?;
        if score.is_null() {
            return Err(fail(EA_ERR_NULL, "score is null"));
        }
        *score = m.inner.score(input(x, n, "x")?)?;
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from `ea_model_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ea_model_free(model: *mut EaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Area under the ROC curve. `labels` holds 1 for a true alarm, 0 otherwise.
///
/// # Safety
/// `labels` and `scores` must point to `n` elements; `auc` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ea_roc_auc(labels: *const i32, scores: *const f64, n: usize, auc: *mut f64) -> i32 {
    guard(|| {
        if auc.is_null() {
            return Err(fail(EA_ERR_NULL, "auc is null"));
        }
        let y: Vec<Label> = input(labels, n, "labels")?
            .iter()
            .map(|&l| match l {
                1 => Ok(Label::TrueAlarm),
                0 => Ok(Label::FalseAlarm),
                v => Err(fail(EA_ERR_INVALID, format!("label {v} is not 0 or 1"))),
            })
            .collect::<Result<_, _>>()?;
        *auc = roc_auc(&y, input(scores, n, "scores")?)?.auc;
        Ok(())
    })
}
