//! C interface to trained supmix target models.
//!
//! Every fallible function returns a [`SupmixStatus`]; on failure the message
//! is available from [`supmix_last_error`] on the same thread. Strings handed
//! out by a model stay valid until the model is freed.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use supmix::corpus::read_columns;
use supmix::evaluation::span_f1;
use supmix::mixer::softmax_weights;
use supmix::model::load_model;
use supmix::training::{FrozenInputs, TargetModel};
use supmix::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupmixStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Data = 4,
    Numeric = 5,
    Dimension = 6,
    BufferTooSmall = 7,
    NoMixture = 8,
    Panic = 9,
}

/// A loaded target model together with its static vectors and sources.
pub struct SupmixModel {
    model: TargetModel,
    frozen: FrozenInputs,
    labels: Vec<CString>,
    source_names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("nul bytes removed"));
}

struct Failure(SupmixStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(_) => SupmixStatus::Io,
            Error::Dimension { .. } => SupmixStatus::Dimension,
            _ if e.is_numeric() => SupmixStatus::Numeric,
            _ => SupmixStatus::Data,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SupmixStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SupmixStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SupmixStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SupmixStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SupmixStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn model_ref<'a>(p: *const SupmixModel) -> Result<&'a SupmixModel, Failure> {
    p.as_ref().ok_or_else(|| null("model"))
}

fn c_strings(items: &[String]) -> Result<Vec<CString>, Failure> {
    items
        .iter()
        .map(|s| CString::new(s.as_str()).map_err(|_| Failure(SupmixStatus::Data, format!("`{s}` contains a nul byte"))))
        .collect()
}

/// Loads the model file at `path` and the static vectors and sources it
/// references. On success `*out` owns a handle to release with
/// [`supmix_model_free`].
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn supmix_model_load(path: *const c_char, out: *mut *mut SupmixModel) -> SupmixStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let (model, refs) = load_model(Path::new(path))?;
        let frozen = refs.load()?;
        let handle = SupmixModel {
            labels: c_strings(&model.labels)?,
            source_names: c_strings(&model.source_names)?,
            model,
            frozen,
        };
        *out = Box::into_raw(Box::new(handle));
        Ok(())
    })
}

/// Releases a handle from [`supmix_model_load`]. Null is ignored.
///
/// # Safety
/// `model` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn supmix_model_free(model: *mut SupmixModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of output labels.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn supmix_model_num_labels(model: *const SupmixModel, out: *mut usize) -> SupmixStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.labels.len();
        Ok(())
    })
}

/// Label `index` as a C string owned by the model, or null when out of range.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn supmix_model_label(model: *const SupmixModel, index: usize) -> *const c_char {
    match model.as_ref().and_then(|m| m.labels.get(index)) {
        Some(s) => s.as_ptr(),
        None => ptr::null(),
    }
}

/// Number of mixed sources; 0 for a static-only model.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn supmix_model_num_sources(model: *const SupmixModel, out: *mut usize) -> SupmixStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.source_names.len();
        Ok(())
    })
}

/// Source name `index` as a C string owned by the model, or null when out of range.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn supmix_model_source_name(model: *const SupmixModel, index: usize) -> *const c_char {
    match model.as_ref().and_then(|m| m.source_names.get(index)) {
        Some(s) => s.as_ptr(),
        None => ptr::null(),
    }
}

/// Tags one sentence of `len` tokens, writing a label index per token to
/// `out_labels` (capacity `len`).
///
/// # Safety
/// `tokens` must point to `len` valid C strings and `out_labels` to `len`
/// writable elements.
#[no_mangle]
pub unsafe extern "C" fn supmix_model_tag(
    model: *const SupmixModel,
    tokens: *const *const c_char,
    len: usize,
    out_labels: *mut usize,
) -> SupmixStatus {
    guard(|| {
        let m = model_ref(model)?;
        if len == 0 {
            return Err(Failure(SupmixStatus::Data, "empty sentence".into()));
        }
        if tokens.is_null() {
            return Err(null("tokens"));
        }
        if out_labels.is_null() {
            return Err(null("out_labels"));
        }
        let words = slice::from_raw_parts(tokens, len)
            .iter()
            .enumerate()
            .map(|(i, &t)| str_arg(t, &format!("token {i}")).map(str::to_owned))
            .collect::<Result<Vec<_>, _>>()?;
        let features = m.frozen.features(&words)?;
        let tags = m.model.params.predict(&features)?;
        slice::from_raw_parts_mut(out_labels, len).copy_from_slice(&tags);
        Ok(())
    })
}

/// Writes the mixture weights (in source order) to `out`, which holds `cap`
/// values, and the scale to `*gamma` when `gamma` is not null.
///
/// # Safety
/// `out` must point to `cap` writable values; `gamma` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn supmix_model_mix_weights(
    model: *const SupmixModel,
    out: *mut f64,
    cap: usize,
    gamma: *mut f64,
) -> SupmixStatus {
    guard(|| {
        let m = model_ref(model)?;
        let mixer = m
            .model
            .params
            .mixer
            .as_ref()
            .ok_or_else(|| Failure(SupmixStatus::NoMixture, "model has no source mixture".into()))?;
        let w = mixer.weights();
        if cap < w.len() {
            return Err(Failure(
                SupmixStatus::BufferTooSmall,
                format!("need room for {} weights, got {cap}", w.len()),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        slice::from_raw_parts_mut(out, w.len()).copy_from_slice(&w);
        if let Some(g) = gamma.as_mut() {
            *g = mixer.gamma;
        }
        Ok(())
    })
}

/// Softmax of `k` logits into `out`.
///
/// # Safety
/// `logits` must point to `k` values and `out` to `k` writable values.
#[no_mangle]
pub unsafe extern "C" fn supmix_softmax_weights(logits: *const f64, k: usize, out: *mut f64) -> SupmixStatus {
    guard(|| {
        if k == 0 {
            return Err(Failure(SupmixStatus::Dimension, "need at least one logit".into()));
        }
        if logits.is_null() || out.is_null() {
            return Err(null("logits or out"));
        }
        let w = softmax_weights(slice::from_raw_parts(logits, k));
        slice::from_raw_parts_mut(out, k).copy_from_slice(&w);
        Ok(())
    })
}

/// Span precision, recall and F1 (fractions in `[0, 1]`) of two corpora in
/// tab-separated `token<TAB>tag` form.
///
/// # Safety
/// The texts must be valid C strings; each output must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn supmix_span_f1(
    gold_conll: *const c_char,
    pred_conll: *const c_char,
    precision: *mut f64,
    recall: *mut f64,
    f1: *mut f64,
) -> SupmixStatus {
    guard(|| {
        let gold = read_columns(str_arg(gold_conll, "gold_conll")?)?;
        let pred = read_columns(str_arg(pred_conll, "pred_conll")?)?;
        let tags = |c: Vec<(Vec<String>, Vec<String>)>| c.into_iter().map(|(_, t)| t).collect::<Vec<_>>();
        let prf = span_f1(&tags(gold), &tags(pred))?;
        for (p, v) in [(precision, prf.precision), (recall, prf.recall), (f1, prf.f1)] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn supmix_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}
