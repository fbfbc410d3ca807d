//! C interface to `cdm-core`.
//!
//! Datasets and models are opaque handles created and released through
//! this API. Every fallible function returns a [`CdmStatus`]; on failure
//! the message is available from [`cdm_last_error`] on the same thread.
//! Panics are caught at the boundary and reported as `CDM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cdm_core::config::RunConfig;
use cdm_core::dataset::synthetic::{generate, SyntheticConfig};
use cdm_core::dataset::{load_q_matrix, load_response_logs, EntityMode, QMatrix, ResponseDataset, ResponseLog};
use cdm_core::diffcore::Matrix;
use cdm_core::experiments::{fit_model, ids_run, split};
use cdm_core::metrics::{doc, reo};
use cdm_core::models::{Dims, FitContext, Model, ModelKind};
use cdm_core::training::{load_checkpoint, save_checkpoint};
use cdm_core::CdmError;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotFound = 3,
    Io = 4,
    Parse = 5,
    Validation = 6,
    Numeric = 7,
    Checkpoint = 8,
    Panic = 9,
}

/// Entity kind for identifiability runs.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdmMode {
    Learner = 0,
    Question = 1,
}

/// Opaque dataset handle.
pub struct CdmDataset {
    inner: ResponseDataset,
}

/// Opaque model handle: a model plus the response vectors it diagnoses from.
pub struct CdmModel {
    model: Model,
    ctx: FitContext,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &CdmError) -> CdmStatus {
    match e {
        CdmError::NotFound(_) => CdmStatus::NotFound,
        CdmError::Io { .. } => CdmStatus::Io,
        CdmError::Parse { .. } | CdmError::UnknownModel(_) | CdmError::Config(_) => CdmStatus::Parse,
        CdmError::NonFinite { .. } => CdmStatus::Numeric,
        CdmError::CorruptCheckpoint(_) | CdmError::CheckpointVersion { .. } | CdmError::KindMismatch { .. } => {
            CdmStatus::Checkpoint
        }
        _ => CdmStatus::Validation,
    }
}

enum Failure {
    Status(CdmStatus, String),
    Core(CdmError),
}

impl From<CdmError> for Failure {
    fn from(e: CdmError) -> Self {
        Failure::Core(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(CdmStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Status(CdmStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CdmStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CdmStatus::Ok,
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CdmStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn config(p: *const c_char) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    if !p.is_null() {
        cfg.apply_text(text(p, "config")?, "config")?;
    }
    Ok(cfg)
}

fn copy_matrix(m: &Matrix, dst: &mut [f64]) -> Result<(), Failure> {
    if dst.len() != m.len() {
        return Err(invalid(format!(
            "buffer holds {} values, {}x{} needed",
            dst.len(),
            m.rows(),
            m.cols()
        )));
    }
    dst.copy_from_slice(m.data());
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cdm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cdm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a response-log CSV and a Q-matrix CSV. `q_base` is the external
/// id of the first Q-matrix row.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdm_dataset_load(
    logs_path: *const c_char,
    q_path: *const c_char,
    q_base: i64,
    out_dataset: *mut *mut CdmDataset,
) -> CdmStatus {
    guard(|| {
        let dst = out(out_dataset, "out_dataset")?;
        let q = load_q_matrix(&PathBuf::from(text(q_path, "q_path")?))?;
        let loaded = load_response_logs(&PathBuf::from(text(logs_path, "logs_path")?))?;
        let inner = ResponseDataset::from_loaded(loaded, &q, q_base)?;
        *dst = Box::into_raw(Box::new(CdmDataset { inner }));
        Ok(())
    })
}

/// Builds a dataset from dense ids. `q_matrix` is `n_questions x
/// n_concepts`, row-major, entries 0 or 1; `scores` are 0 or 1.
///
/// # Safety
/// Each array must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn cdm_dataset_from_arrays(
    n_learners: usize,
    n_questions: usize,
    n_concepts: usize,
    learners: *const u32,
    questions: *const u32,
    scores: *const u8,
    n_logs: usize,
    q_matrix: *const u8,
    out_dataset: *mut *mut CdmDataset,
) -> CdmStatus {
    guard(|| {
        let dst = out(out_dataset, "out_dataset")?;
        let l = slice(learners, n_logs, "learners")?;
        let qs = slice(questions, n_logs, "questions")?;
        let s = slice(scores, n_logs, "scores")?;
        let cells = n_questions
            .checked_mul(n_concepts)
            .ok_or_else(|| invalid("q_matrix size overflows"))?;
        let qm = slice(q_matrix, cells, "q_matrix")?;
        if n_concepts == 0 {
            return Err(invalid("n_concepts must be positive"));
        }
        let rows = qm.chunks(n_concepts).map(<[u8]>::to_vec).collect();
        let logs = (0..n_logs)
            .map(|i| ResponseLog::new(l[i] as usize, qs[i] as usize, s[i]))
            .collect();
        let inner = ResponseDataset::from_dense(n_learners, logs, QMatrix::new(rows)?)?;
        *dst = Box::into_raw(Box::new(CdmDataset { inner }));
        Ok(())
    })
}

/// Seeded synthetic dataset shaped like Math1 with `learners` learners.
///
/// # Safety
/// `out_dataset` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdm_dataset_synthetic(
    learners: usize,
    seed: u64,
    out_dataset: *mut *mut CdmDataset,
) -> CdmStatus {
    guard(|| {
        let dst = out(out_dataset, "out_dataset")?;
        let inner = generate(&SyntheticConfig {
            learners,
            ..SyntheticConfig::math1_like(seed)
        })?;
        *dst = Box::into_raw(Box::new(CdmDataset { inner }));
        Ok(())
    })
}

/// Writes learner, question, concept and log counts. Any output may be null.
///
/// # Safety
/// `dataset` must come from this library; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdm_dataset_shape(
    dataset: *const CdmDataset,
    n_learners: *mut usize,
    n_questions: *mut usize,
    n_concepts: *mut usize,
    n_logs: *mut usize,
) -> CdmStatus {
    guard(|| {
        let ds = &dataset.as_ref().ok_or_else(|| null("dataset"))?.inner;
        for (p, v) in [
            (n_learners, ds.n_learners),
            (n_questions, ds.n_questions),
            (n_concepts, ds.n_concepts),
            (n_logs, ds.logs.len()),
        ] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `dataset` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cdm_dataset_free(dataset: *mut CdmDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Splits the dataset with `seed` and trains `model_kind` (`idcdm`,
/// `ncdm`, `irt`, ...) on the fit part. `config` is null or `key = value`
/// lines as accepted by the CLI's config file.
///
/// # Safety
/// Pointers must be valid; `config` may be null.
#[no_mangle]
pub unsafe extern "C" fn cdm_model_train(
    dataset: *const CdmDataset,
    model_kind: *const c_char,
    seed: u64,
    config: *const c_char,
    out_model: *mut *mut CdmModel,
) -> CdmStatus {
    guard(|| {
        let dst = out(out_model, "out_model")?;
        let ds = &dataset.as_ref().ok_or_else(|| null("dataset"))?.inner;
        let kind: ModelKind = text(model_kind, "model_kind")?.parse()?;
        let cfg = self::config(config)?;
        let parts = split(&cfg, ds, seed)?;
        let fitted = fit_model(ds, &parts, &cfg.train_config(kind, seed), None)?;
        *dst = Box::into_raw(Box::new(CdmModel {
            model: fitted.model,
            ctx: fitted.ctx,
        }));
        Ok(())
    })
}

/// Loads a checkpoint and attaches it to `dataset`, whose logs form the
/// response vectors used for diagnosis.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cdm_model_load(
    path: *const c_char,
    dataset: *const CdmDataset,
    out_model: *mut *mut CdmModel,
) -> CdmStatus {
    guard(|| {
        let dst = out(out_model, "out_model")?;
        let ds = &dataset.as_ref().ok_or_else(|| null("dataset"))?.inner;
        let model = load_checkpoint(&PathBuf::from(text(path, "path")?))?;
        let dims = Dims::of(ds);
        if model.dims() != dims {
            return Err(invalid(format!(
                "checkpoint was trained on {:?}, dataset has {dims:?}",
                model.dims()
            )));
        }
        let ctx = FitContext::new(dims, &ds.logs, &ds.q_matrix)?;
        *dst = Box::into_raw(Box::new(CdmModel { model, ctx }));
        Ok(())
    })
}

/// Writes the model to a checkpoint file.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cdm_model_save(model: *const CdmModel, path: *const c_char) -> CdmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        save_checkpoint(&m.model, &PathBuf::from(text(path, "path")?))?;
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cdm_model_free(model: *mut CdmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Copies the model kind name, NUL-terminated, into `buf`. Returns
/// `InvalidArgument` when `len` is too small.
///
/// # Safety
/// `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn cdm_model_kind(model: *const CdmModel, buf: *mut c_char, len: usize) -> CdmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let name = m.model.kind().name().as_bytes();
        let dst = slice_mut(buf.cast::<u8>(), len, "buf")?;
        if dst.len() <= name.len() {
            return Err(invalid(format!("buffer of {len} bytes, {} needed", name.len() + 1)));
        }
        dst[..name.len()].copy_from_slice(name);
        dst[name.len()] = 0;
        Ok(())
    })
}

/// Probability of a correct response for each (learner, question) pair.
///
/// # Safety
/// Arrays must hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn cdm_model_predict(
    model: *const CdmModel,
    learners: *const u32,
    questions: *const u32,
    n: usize,
    out_probs: *mut f64,
) -> CdmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let l = slice(learners, n, "learners")?;
        let q = slice(questions, n, "questions")?;
        let dst = slice_mut(out_probs, n, "out_probs")?;
        let logs: Vec<ResponseLog> = l
            .iter()
            .zip(q)
            .map(|(&i, &j)| ResponseLog::new(i as usize, j as usize, 0))
            .collect();
        dst.copy_from_slice(&m.model.predict_logs(&m.ctx, &logs)?);
        Ok(())
    })
}

/// Shapes of the learner-trait and question-parameter matrices. Any
/// output may be null.
///
/// # Safety
/// `model` must be valid; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdm_model_diagnosis_shape(
    model: *const CdmModel,
    learner_rows: *mut usize,
    learner_cols: *mut usize,
    question_rows: *mut usize,
    question_cols: *mut usize,
) -> CdmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let d = m.model.diagnose_all(&m.ctx)?;
        let (lt, qp) = (d.learner_traits(), d.question_params());
        for (p, v) in [
            (learner_rows, lt.rows()),
            (learner_cols, lt.cols()),
            (question_rows, qp.rows()),
            (question_cols, qp.cols()),
        ] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Writes learner traits (row-major) into `out_traits`, which must hold
/// exactly rows x cols values as reported by `cdm_model_diagnosis_shape`.
///
/// # Safety
/// `out_traits` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn cdm_model_learner_traits(
    model: *const CdmModel,
    out_traits: *mut f64,
    len: usize,
) -> CdmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let traits = m.model.diagnose_all(&m.ctx)?.learner_traits();
        copy_matrix(&traits, slice_mut(out_traits, len, "out_traits")?)
    })
}

/// Writes question parameters (row-major) into `out_params`.
///
/// # Safety
/// `out_params` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn cdm_model_question_params(
    model: *const CdmModel,
    out_params: *mut f64,
    len: usize,
) -> CdmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let params = m.model.diagnose_all(&m.ctx)?.question_params();
        copy_matrix(&params, slice_mut(out_params, len, "out_params")?)
    })
}

/// Mean degree of consistency of the model's learner traits on all logs
/// of `dataset`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cdm_model_doc(
    model: *const CdmModel,
    dataset: *const CdmDataset,
    out_doc: *mut f64,
) -> CdmStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let ds = &dataset.as_ref().ok_or_else(|| null("dataset"))?.inner;
        let dst = out(out_doc, "out_doc")?;
        if !m.model.kind().concept_traits() {
            return Err(invalid(format!("{} has no concept-wise traits", m.model.kind())));
        }
        let traits = m.model.diagnose_all(&m.ctx)?.learner_traits();
        *dst = doc(&traits, &ds.logs, &ds.q_matrix)?.mean;
        Ok(())
    })
}

/// Rate of explainability overfitting from a training and a test DOC.
///
/// # Safety
/// `out_reo` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdm_reo(doc_train: f64, doc_test: f64, out_reo: *mut f64) -> CdmStatus {
    guard(|| {
        *out(out_reo, "out_reo")? = reo(doc_train, doc_test)?;
        Ok(())
    })
}

/// Duplicates every learner or question of `dataset`, trains `model_kind`
/// with `seed`, and writes the identifiability score.
///
/// # Safety
/// Pointers must be valid; `config` may be null.
#[no_mangle]
pub unsafe extern "C" fn cdm_ids(
    dataset: *const CdmDataset,
    model_kind: *const c_char,
    mode: CdmMode,
    seed: u64,
    config: *const c_char,
    out_ids: *mut f64,
) -> CdmStatus {
    guard(|| {
        let dst = out(out_ids, "out_ids")?;
        let ds = &dataset.as_ref().ok_or_else(|| null("dataset"))?.inner;
        let kind: ModelKind = text(model_kind, "model_kind")?.parse()?;
        let cfg = self::config(config)?;
        let mode = match mode {
            CdmMode::Learner => EntityMode::Learner,
            CdmMode::Question => EntityMode::Question,
        };
        *dst = ids_run(ds, mode, &cfg.train_config(kind, seed), &cfg, None)?.ids;
        Ok(())
    })
}
