//! C ABI over the `disclstm` crate.
//!
//! Models are opaque handles created by [`disclstm_model_load`] or
//! [`disclstm_model_init`] and released with [`disclstm_model_free`]. Every
//! fallible call returns a [`DisclstmStatus`]; on failure a description is
//! available from [`disclstm_last_error_message`] on the same thread.
//! Panics never cross the boundary.
//!
//! Edges are passed as a flat array of `2 * num_edges` indices,
//! `[src0, tgt0, src1, tgt1, ...]`, with `src < tgt`. Matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use disclstm::autodiff::{AutodiffError, Matrix};
use disclstm::checkpoint::{Checkpoint, CheckpointError};
use disclstm::graph::{build_graph, edge_stats, DiscourseGraph};
use disclstm::metrics;
use disclstm::model::{ModelConfig, ModelError, ModelParams};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DisclstmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    Numeric = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DisclstmModelConfig {
    pub dim_u: usize,
    pub dim_g: usize,
    pub dim_h: usize,
    pub layers: usize,
    pub num_classes: usize,
}

impl From<ModelConfig> for DisclstmModelConfig {
    fn from(c: ModelConfig) -> Self {
        Self {
            dim_u: c.dim_u,
            dim_g: c.dim_g,
            dim_h: c.dim_h,
            layers: c.layers,
            num_classes: c.num_classes,
        }
    }
}

impl From<DisclstmModelConfig> for ModelConfig {
    fn from(c: DisclstmModelConfig) -> Self {
        Self {
            dim_u: c.dim_u,
            dim_g: c.dim_g,
            dim_h: c.dim_h,
            layers: c.layers,
            num_classes: c.num_classes,
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DisclstmGraphStats {
    pub n: usize,
    pub edges: usize,
    pub complete_edges: usize,
    pub density: f64,
}

/// Opaque model handle.
pub struct DisclstmModel {
    params: ModelParams,
    seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(DisclstmStatus, String);

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let status = match &e {
            ModelError::InvalidConfig(_) => DisclstmStatus::InvalidArgument,
            ModelError::Shape(_) => DisclstmStatus::Shape,
            ModelError::Autodiff(AutodiffError::NonFinite { .. }) => DisclstmStatus::Numeric,
            ModelError::Autodiff(_) => DisclstmStatus::Shape,
        };
        Failure(status, e.to_string())
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        let status = match &e {
            CheckpointError::Io { .. } => DisclstmStatus::Io,
            CheckpointError::Format(_) => DisclstmStatus::Format,
            CheckpointError::Model(_) => DisclstmStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(DisclstmStatus::InvalidArgument, msg.into())
}

fn null(what: &str) -> Failure {
    Failure(DisclstmStatus::NullPointer, format!("{what} is null"))
}

/// Run `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DisclstmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DisclstmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DisclstmStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn graph_arg(n: usize, edges: *const usize, num_edges: usize) -> Result<DiscourseGraph, Failure> {
    let flat = slice_arg(edges, 2 * num_edges, "edges")?;
    let pairs: Vec<(usize, usize)> = flat.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    build_graph(n, &pairs).map_err(|e| invalid(e.to_string()))
}

unsafe fn model_arg<'a>(model: *const DisclstmModel) -> Result<&'a DisclstmModel, Failure> {
    model.as_ref().ok_or_else(|| null("model"))
}

/// Message describing the most recent failure on this thread, or null if
/// the last call succeeded. Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn disclstm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn disclstm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load a checkpoint file into a new handle written to `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn disclstm_model_load(path: *const c_char, out: *mut *mut DisclstmModel) -> DisclstmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ck = Checkpoint::load(&path_arg(path)?)?;
        let handle = Box::new(DisclstmModel {
            params: ck.params,
            seed: ck.seed,
        });
        *out = Box::into_raw(handle);
        Ok(())
    })
}

/// Create a freshly initialised model.
///
/// # Safety
/// `config` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn disclstm_model_init(
    config: *const DisclstmModelConfig,
    seed: u64,
    out: *mut *mut DisclstmModel,
) -> DisclstmStatus {
    guard(|| {
        let config = config.as_ref().ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let params = ModelParams::init((*config).into(), seed)?;
        *out = Box::into_raw(Box::new(DisclstmModel { params, seed }));
        Ok(())
    })
}

/// Write the model as a checkpoint file.
///
/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn disclstm_model_save(model: *const DisclstmModel, path: *const c_char) -> DisclstmStatus {
    guard(|| {
        let m = model_arg(model)?;
        Checkpoint::new(m.params.clone(), m.seed).save(&path_arg(path)?)?;
        Ok(())
    })
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn disclstm_model_free(model: *mut DisclstmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn disclstm_model_config(
    model: *const DisclstmModel,
    out: *mut DisclstmModelConfig,
) -> DisclstmStatus {
    guard(|| {
        let m = model_arg(model)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = m.params.config.into();
        Ok(())
    })
}

unsafe fn run_forward(
    model: *const DisclstmModel,
    embeddings: *const f64,
    n: usize,
    dim_u: usize,
    edges: *const usize,
    num_edges: usize,
) -> Result<Matrix, Failure> {
    let m = model_arg(model)?;
    if n == 0 {
        return Err(invalid("dialogue has no utterances"));
    }
    let data = slice_arg(embeddings, n * dim_u, "embeddings")?;
    let u = Matrix::from_vec(n, dim_u, data.to_vec()).map_err(|e| invalid(e.to_string()))?;
    let graph = graph_arg(n, edges, num_edges)?;
    Ok(m.params.forward(&u, &graph)?)
}

/// Logits for one dialogue, written row-major into `logits_out`
/// (`n * num_classes` values).
///
/// # Safety
/// Pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn disclstm_model_forward(
    model: *const DisclstmModel,
    embeddings: *const f64,
    n: usize,
    dim_u: usize,
    edges: *const usize,
    num_edges: usize,
    logits_out: *mut f64,
) -> DisclstmStatus {
    guard(|| {
        let logits = run_forward(model, embeddings, n, dim_u, edges, num_edges)?;
        if logits_out.is_null() {
            return Err(null("logits_out"));
        }
        ptr::copy_nonoverlapping(logits.data().as_ptr(), logits_out, logits.len());
        Ok(())
    })
}

/// Predicted class per utterance, written into `labels_out` (`n` values).
///
/// # Safety
/// Pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn disclstm_model_predict(
    model: *const DisclstmModel,
    embeddings: *const f64,
    n: usize,
    dim_u: usize,
    edges: *const usize,
    num_edges: usize,
    labels_out: *mut usize,
) -> DisclstmStatus {
    guard(|| {
        let logits = run_forward(model, embeddings, n, dim_u, edges, num_edges)?;
        if labels_out.is_null() {
            return Err(null("labels_out"));
        }
        for r in 0..n {
            *labels_out.add(r) = disclstm::model::argmax(logits.row(r));
        }
        Ok(())
    })
}

/// Support-weighted F1 of `preds` against `golds` over `num_classes`.
///
/// # Safety
/// `preds` and `golds` must hold `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn disclstm_weighted_f1(
    preds: *const usize,
    golds: *const usize,
    len: usize,
    num_classes: usize,
    out: *mut f64,
) -> DisclstmStatus {
    guard(|| {
        let p = slice_arg(preds, len, "preds")?;
        let g = slice_arg(golds, len, "golds")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let report = metrics::weighted_f1(p, g, num_classes).map_err(|e| invalid(e.to_string()))?;
        *out = report.weighted_f1;
        Ok(())
    })
}

/// Edge statistics of one discourse graph.
///
/// # Safety
/// `edges` must hold `2 * num_edges` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn disclstm_graph_stats(
    n: usize,
    edges: *const usize,
    num_edges: usize,
    out: *mut DisclstmGraphStats,
) -> DisclstmStatus {
    guard(|| {
        let graph = graph_arg(n, edges, num_edges)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let s = edge_stats(&graph);
        *out = DisclstmGraphStats {
            n: s.n,
            edges: s.edges,
            complete_edges: s.complete_edges,
            density: s.density,
        };
        Ok(())
    })
}
