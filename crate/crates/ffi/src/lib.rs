//! C ABI over `hdlcnn-core`.
//!
//! Every function returns an [`HdlStatus`]; on failure a description is kept
//! per thread and can be read with [`hdl_last_error`]. Models are opaque
//! [`HdlModel`] handles released with [`hdl_model_free`]. Sample buffers are
//! row-major `[p][t]` doubles in the caller's original feature order; the
//! model's feature ordering is applied internally.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use hdlcnn_core::clustering::{cluster_and_order, ClusterError, FeatureMatrix};
use hdlcnn_core::explainer::{DeepShap, ExplainError};
use hdlcnn_core::model::{HdlcnnModel, ModelError};
use hdlcnn_core::numerics::{softmax, Tensor};
use libc::{c_char, size_t};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HdlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    /// Not a model file, wrong version, truncated or failed checksum.
    Format = 4,
    /// Buffer sizes disagree with the model's dimensions.
    Shape = 5,
    Untrained = 6,
    Internal = 7,
    Panic = 8,
}

/// Opaque model handle.
pub struct HdlModel {
    inner: HdlcnnModel,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HdlDims {
    pub n_features: size_t,
    pub n_timesteps: size_t,
    pub n_classes: size_t,
    /// Rows in the first segment after reordering.
    pub boundary: size_t,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(HdlStatus, String);

impl Failure {
    fn new(status: HdlStatus, msg: impl Into<String>) -> Self {
        Self(status, msg.into())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let status = match &e {
            ModelError::Io(_) => HdlStatus::Io,
            ModelError::Format(_) => HdlStatus::Format,
            ModelError::InputShape { .. } | ModelError::Dataset(_) => HdlStatus::Shape,
            ModelError::Config(_) | ModelError::Train(_) | ModelError::Ordering(_) => HdlStatus::InvalidArgument,
            _ => HdlStatus::Internal,
        };
        Self(status, e.to_string())
    }
}

impl From<ExplainError> for Failure {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::Model(m) => m.into(),
            ExplainError::Untrained => Self(HdlStatus::Untrained, e.to_string()),
            ExplainError::Summation { .. } => Self(HdlStatus::Internal, e.to_string()),
            other => Self(HdlStatus::InvalidArgument, other.to_string()),
        }
    }
}

impl From<ClusterError> for Failure {
    fn from(e: ClusterError) -> Self {
        Self(HdlStatus::InvalidArgument, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HdlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            HdlStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside hdlcnn");
            HdlStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(HdlStatus::NullPointer, format!("{name} is NULL")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Failure> {
    non_null(path, "path")?;
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| Failure::new(HdlStatus::InvalidArgument, "path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn model_arg<'a>(model: *const HdlModel) -> Result<&'a HdlcnnModel, Failure> {
    non_null(model, "model")?;
    Ok(&(*model).inner)
}

/// Copies `n` samples from `x` and permutes each into the model's feature order.
unsafe fn samples_arg(model: &HdlcnnModel, x: *const f64, n: usize) -> Result<Vec<Tensor>, Failure> {
    non_null(x, "samples")?;
    let [_, p, t] = model.sample_shape();
    let raw = std::slice::from_raw_parts(x, n * p * t);
    raw.chunks(p * t)
        .map(|chunk| {
            let rows = model.ordering().apply_rows(chunk, t);
            Tensor::new(vec![1, p, t], rows).map_err(|e| Failure::new(HdlStatus::Internal, e.to_string()))
        })
        .collect()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hdl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread ("" after a success).
/// Valid until the next `hdl_*` call on the same thread.
#[no_mangle]
pub extern "C" fn hdl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a model file into a new handle stored in `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hdl_model_load(path: *const c_char, out: *mut *mut HdlModel) -> HdlStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let inner = HdlcnnModel::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(HdlModel { inner }));
        Ok(())
    })
}

/// Writes the model to `path` (atomically).
///
/// # Safety
/// `model` must come from [`hdl_model_load`]; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hdl_model_save(model: *const HdlModel, path: *const c_char) -> HdlStatus {
    guard(|| Ok(model_arg(model)?.save(path_arg(path)?)?))
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `model` must come from [`hdl_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hdl_model_free(model: *mut HdlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hdl_model_dims(model: *const HdlModel, out: *mut HdlDims) -> HdlStatus {
    guard(|| {
        let m = model_arg(model)?;
        non_null(out, "out")?;
        let c = m.config();
        *out = HdlDims {
            n_features: c.n_features,
            n_timesteps: c.n_timesteps,
            n_classes: c.n_classes,
            boundary: c.boundary,
        };
        Ok(())
    })
}

/// Copies the model's feature permutation (`p` entries) into `out`.
///
/// # Safety
/// `out` must hold `len` writable `size_t`s.
#[no_mangle]
pub unsafe extern "C" fn hdl_model_ordering(model: *const HdlModel, out: *mut size_t, len: size_t) -> HdlStatus {
    guard(|| {
        let m = model_arg(model)?;
        non_null(out, "out")?;
        let perm = &m.ordering().permutation;
        if len != perm.len() {
            return Err(Failure::new(HdlStatus::Shape, format!("need {} slots, got {len}", perm.len())));
        }
        ptr::copy_nonoverlapping(perm.as_ptr(), out, perm.len());
        Ok(())
    })
}

/// Class probabilities for `n` samples: `x` holds `n * p * t` doubles and
/// `probs` receives `n * n_classes`.
///
/// # Safety
/// Buffers must be valid for the sizes given.
#[no_mangle]
pub unsafe extern "C" fn hdl_predict_proba(
    model: *const HdlModel,
    x: *const f64,
    n: size_t,
    probs: *mut f64,
    probs_len: size_t,
) -> HdlStatus {
    guard(|| {
        let m = model_arg(model)?;
        non_null(probs, "probs")?;
        let k = m.config().n_classes;
        if probs_len != n * k {
            return Err(Failure::new(HdlStatus::Shape, format!("probs needs {} slots, got {probs_len}", n * k)));
        }
        let out = std::slice::from_raw_parts_mut(probs, probs_len);
        for (sample, dst) in samples_arg(m, x, n)?.iter().zip(out.chunks_mut(k)) {
            dst.copy_from_slice(&softmax(m.sample_logits(sample)?.data()));
        }
        Ok(())
    })
}

/// Most likely class of each of `n` samples.
///
/// # Safety
/// `x` must hold `n * p * t` doubles and `labels` `n` writable slots.
#[no_mangle]
pub unsafe extern "C" fn hdl_predict(model: *const HdlModel, x: *const f64, n: size_t, labels: *mut size_t) -> HdlStatus {
    guard(|| {
        let m = model_arg(model)?;
        non_null(labels, "labels")?;
        let out = std::slice::from_raw_parts_mut(labels, n);
        for (sample, dst) in samples_arg(m, x, n)?.iter().zip(out) {
            *dst = m.predict(sample)?;
        }
        Ok(())
    })
}

/// Deep SHAP contributions of one sample to the `target` logit against
/// `n_background` reference samples.
///
/// `contributions` receives `p * t` doubles in the caller's feature order;
/// `reference_output` and `sample_output` (either may be NULL) receive the
/// mean background logit and the sample's logit, whose difference equals the
/// sum of the contributions.
///
/// # Safety
/// Buffers must be valid for the sizes implied by the model's dimensions.
#[no_mangle]
pub unsafe extern "C" fn hdl_explain(
    model: *const HdlModel,
    sample: *const f64,
    background: *const f64,
    n_background: size_t,
    target: size_t,
    contributions: *mut f64,
    reference_output: *mut f64,
    sample_output: *mut f64,
) -> HdlStatus {
    guard(|| {
        let m = model_arg(model)?;
        non_null(contributions, "contributions")?;
        let x = samples_arg(m, sample, 1)?;
        let bg = samples_arg(m, background, n_background)?;
        let e = DeepShap::new(m, &bg)?.explain(0, &x[0], target)?;
        let e = e.restore_feature_order(m.ordering())?;
        let c = e.contributions.data();
        ptr::copy_nonoverlapping(c.as_ptr(), contributions, c.len());
        if !reference_output.is_null() {
            *reference_output = e.reference_output;
        }
        if !sample_output.is_null() {
            *sample_output = e.sample_output;
        }
        Ok(())
    })
}

/// Ward clustering of `n_features` columns (each `n_samples` long, stored
/// one after another) into two groups. Writes the feature permutation to
/// `permutation` and the size of the first group to `boundary`.
///
/// # Safety
/// `columns` must hold `n_samples * n_features` doubles, `permutation`
/// `n_features` writable slots, and `boundary` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hdl_ward_order(
    columns: *const f64,
    n_samples: size_t,
    n_features: size_t,
    permutation: *mut size_t,
    boundary: *mut size_t,
) -> HdlStatus {
    guard(|| {
        non_null(columns, "columns")?;
        non_null(permutation, "permutation")?;
        non_null(boundary, "boundary")?;
        let data = std::slice::from_raw_parts(columns, n_samples * n_features);
        let cols = data.chunks(n_samples.max(1)).map(<[f64]>::to_vec).collect();
        let (_, ordering) = cluster_and_order(&FeatureMatrix::new(cols)?)?;
        ptr::copy_nonoverlapping(ordering.permutation.as_ptr(), permutation, n_features);
        *boundary = ordering.boundary;
        Ok(())
    })
}
