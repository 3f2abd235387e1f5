//! C ABI over the `tsvad` engine.
//!
//! Encoders and knowledge bases are opaque handles created by the `*_load`
//! functions and released with the matching `*_free`. Every fallible call
//! returns a [`TsvadStatus`]; on failure [`tsvad_last_error`] describes the
//! problem for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use tsvad::context::{mle_with_mode, ErrorMap, LocalErrorMode};
use tsvad::eval::roc_auc;
use tsvad::hash::HashEncoder;
use tsvad::kb::KnowledgeBase;
use tsvad::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsvadStatus {
    Ok = 0,
    InvalidArgument = 1,
    Format = 2,
    Io = 3,
    Numeric = 4,
    InvalidState = 5,
    UndefinedMetric = 6,
    Spec = 7,
    NullPointer = 8,
    Panic = 9,
}

/// Trained hash encoder.
pub struct TsvadEncoder(HashEncoder);

/// Knowledge base of hashed normal events.
pub struct TsvadKnowledgeBase(KnowledgeBase);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TsvadStatus {
    match e {
        Error::InvalidArgument(_) => TsvadStatus::InvalidArgument,
        Error::Numeric(_) => TsvadStatus::Numeric,
        Error::InvalidState(_) => TsvadStatus::InvalidState,
        Error::Format { .. } => TsvadStatus::Format,
        Error::UndefinedMetric(_) => TsvadStatus::UndefinedMetric,
        Error::Spec { .. } => TsvadStatus::Spec,
        Error::Io { .. } => TsvadStatus::Io,
    }
}

enum Fail {
    Engine(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Engine(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TsvadStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TsvadStatus::Ok,
        Ok(Err(Fail::Engine(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is null"));
            TsvadStatus::NullPointer
        }
        Err(_) => {
            set_error("internal panic".to_string());
            TsvadStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidArgument("path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tsvad_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tsvad_encoder_load(
    path: *const c_char,
    out: *mut *mut TsvadEncoder,
) -> TsvadStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let enc = HashEncoder::load(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(TsvadEncoder(enc)));
        Ok(())
    })
}

/// # Safety
/// `encoder` must come from [`tsvad_encoder_load`] and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn tsvad_encoder_free(encoder: *mut TsvadEncoder) {
    if !encoder.is_null() {
        drop(Box::from_raw(encoder));
    }
}

/// Input dimension `D`, number of hash layers `B` and code length `R`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tsvad_encoder_dims(
    encoder: *const TsvadEncoder,
    input_dim: *mut usize,
    num_tables: *mut usize,
    code_len: *mut usize,
) -> TsvadStatus {
    guard(|| {
        let enc = &ref_arg(encoder, "encoder")?.0;
        *out_arg(input_dim, "input_dim")? = enc.input_dim();
        *out_arg(num_tables, "num_tables")? = enc.num_layers();
        *out_arg(code_len, "code_len")? = enc.code_len();
        Ok(())
    })
}

/// Writes the `B x R` real-valued codes of one feature vector, layer by layer.
///
/// # Safety
/// `features` must hold `len` values and `codes` room for `codes_len` values.
#[no_mangle]
pub unsafe extern "C" fn tsvad_encoder_encode(
    encoder: *const TsvadEncoder,
    features: *const f64,
    len: usize,
    codes: *mut f64,
    codes_len: usize,
) -> TsvadStatus {
    guard(|| {
        let enc = &ref_arg(encoder, "encoder")?.0;
        let x = slice_arg(features, len, "features")?;
        let need = enc.num_layers() * enc.code_len();
        if codes_len < need {
            return Err(Error::InvalidArgument(format!(
                "code buffer holds {codes_len} values, need {need}"
            ))
            .into());
        }
        if codes.is_null() {
            return Err(Fail::Null("codes"));
        }
        let set = enc.encode_values(x)?;
        let out = std::slice::from_raw_parts_mut(codes, need);
        out.copy_from_slice(&set.concat());
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tsvad_kb_load(
    path: *const c_char,
    out: *mut *mut TsvadKnowledgeBase,
) -> TsvadStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let kb = KnowledgeBase::load(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(TsvadKnowledgeBase(kb)));
        Ok(())
    })
}

/// # Safety
/// `kb` must come from [`tsvad_kb_load`] and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn tsvad_kb_free(kb: *mut TsvadKnowledgeBase) {
    if !kb.is_null() {
        drop(Box::from_raw(kb));
    }
}

/// Anomaly score of one snippet: the smallest distance to a stored
/// representation over all tables, or `sqrt(R)` when every table misses.
///
/// # Safety
/// `features` must hold `len` values; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tsvad_kb_retrieve_score(
    kb: *const TsvadKnowledgeBase,
    encoder: *const TsvadEncoder,
    features: *const f64,
    len: usize,
    score: *mut f64,
) -> TsvadStatus {
    guard(|| {
        let kb = &ref_arg(kb, "kb")?.0;
        let enc = &ref_arg(encoder, "encoder")?.0;
        let x = slice_arg(features, len, "features")?;
        let out = out_arg(score, "score")?;
        let fv = tsvad::hash::FeatureVector::new("", 0, x.to_vec());
        *out = kb.retrieve_score(enc, &fv)?.score;
        Ok(())
    })
}

/// Maximum local error of a row-major `height x width` error map, using
/// window means (`use_window_max == 0`) or window maxima.
///
/// # Safety
/// `values` must hold `height * width` values and `result` be valid.
#[no_mangle]
pub unsafe extern "C" fn tsvad_mle(
    values: *const f64,
    height: usize,
    width: usize,
    k: usize,
    stride: usize,
    use_window_max: i32,
    result: *mut f64,
) -> TsvadStatus {
    guard(|| {
        let n = height
            .checked_mul(width)
            .ok_or_else(|| Error::InvalidArgument("map is too large".into()))?;
        let v = slice_arg(values, n, "values")?;
        let out = out_arg(result, "result")?;
        let map = ErrorMap::from_values(height, width, v.to_vec(), 0.0)?;
        let mode = if use_window_max != 0 {
            LocalErrorMode::WindowMax
        } else {
            LocalErrorMode::WindowMean
        };
        *out = mle_with_mode(&map, k, stride, mode)?;
        Ok(())
    })
}

/// Area under the ROC curve with half credit for ties.
///
/// # Safety
/// `scores` and `labels` must hold `n` values and `result` be valid.
#[no_mangle]
pub unsafe extern "C" fn tsvad_roc_auc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    result: *mut f64,
) -> TsvadStatus {
    guard(|| {
        let s = slice_arg(scores, n, "scores")?;
        let l = slice_arg(labels, n, "labels")?;
        *out_arg(result, "result")? = roc_auc(s, l)?;
        Ok(())
    })
}
