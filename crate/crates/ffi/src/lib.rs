//! C ABI over `emm-core`.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every fallible call returns an
//! [`EmmStatus`]; on failure the message is available from
//! [`emm_last_error_message`] on the same thread until the next failing call.
//! Output arrays are caller-allocated and their length is checked.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use emm_core::analysis::logistic_propensity;
use emm_core::bart::{bart_ite, BartConfig};
use emm_core::bcf::{fit_bcf, predict_ite_bcf, BcfConfig};
use emm_core::dataset::{load_csv, ColumnSchema};
use emm_core::grf::{self, CausalForestConfig, CausalForestModel};
use emm_core::pipeline::{run_pipeline, PipelineConfig};
use emm_core::{Error, ObservationalDataset};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Data = 4,
    Config = 5,
    Positivity = 6,
    Separation = 7,
    RankDeficient = 8,
    Numerical = 9,
    /// An output buffer has the wrong length.
    LengthMismatch = 10,
    /// The pipeline ran but at least one method failed.
    MethodFailed = 11,
    Panic = 12,
}

/// Opaque dataset handle.
pub struct EmmDataset(ObservationalDataset);

/// Opaque fitted causal forest handle.
pub struct EmmCausalForest(CausalForestModel);

/// Chain lengths for the Bayesian estimators; zero keeps the default.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EmmMcmcOptions {
    pub burn_in: usize,
    pub draws: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> EmmStatus {
    match err {
        Error::Io { .. } => EmmStatus::Io,
        Error::Csv(_) | Error::Data(_) => EmmStatus::Data,
        Error::InvalidArgument(_) => EmmStatus::InvalidArgument,
        Error::Positivity(_) => EmmStatus::Positivity,
        Error::Separation { .. } => EmmStatus::Separation,
        Error::RankDeficient(_) => EmmStatus::RankDeficient,
        Error::Config(_) => EmmStatus::Config,
        Error::Numerical(_) => EmmStatus::Numerical,
    }
}

struct Failure(EmmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: EmmStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EmmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EmmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            EmmStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(EmmStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(EmmStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(EmmStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(fail(EmmStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out(values: &[f64], out: *mut f64, len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(EmmStatus::NullPointer, "output buffer is null"));
    }
    if len != values.len() {
        return Err(fail(
            EmmStatus::LengthMismatch,
            format!("output buffer holds {len} values, {} needed", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, len);
    Ok(())
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(EmmStatus::NullPointer, "output pointer is null"));
    }
    *out = value;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn emm_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn emm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Load a CSV file. Every column other than the outcome and exposure is a covariate.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emm_dataset_load_csv(
    path: *const c_char,
    outcome: *const c_char,
    exposure: *const c_char,
    out: *mut *mut EmmDataset,
) -> EmmStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let schema = ColumnSchema::new(str_arg(outcome, "outcome")?, str_arg(exposure, "exposure")?);
        let data = load_csv(Path::new(path), &schema)?;
        put(out, Box::into_raw(Box::new(EmmDataset(data))))
    })
}

/// Build a dataset from column-major covariates (`p` columns of length `n`),
/// a 0/1 exposure and an outcome. Covariates are named `x1..xp`; the outcome
/// kind is binary when every value is 0 or 1.
///
/// # Safety
/// `covariates` must hold `n * p` values, `exposure` and `outcome` `n` each.
#[no_mangle]
pub unsafe extern "C" fn emm_dataset_from_columns(
    covariates: *const f64,
    n: usize,
    p: usize,
    exposure: *const f64,
    outcome: *const f64,
    out: *mut *mut EmmDataset,
) -> EmmStatus {
    guard(|| {
        let total = n
            .checked_mul(p)
            .ok_or_else(|| fail(EmmStatus::InvalidArgument, "n * p overflows"))?;
        let x = slice_arg(covariates, total, "covariates")?;
        let columns = x.chunks(n.max(1)).take(p).map(<[f64]>::to_vec).collect();
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        let data = ObservationalDataset::with_inferred_kind(
            columns,
            slice_arg(exposure, n, "exposure")?.to_vec(),
            slice_arg(outcome, n, "outcome")?.to_vec(),
            names,
        )?;
        put(out, Box::into_raw(Box::new(EmmDataset(data))))
    })
}

/// Number of units, or 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn emm_dataset_n(data: *const EmmDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.n())
}

/// Number of covariates, or 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn emm_dataset_p(data: *const EmmDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.p())
}

/// # Safety
/// `data` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn emm_dataset_free(data: *mut EmmDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Fit a causal forest. `num_trees == 0` keeps the default.
///
/// # Safety
/// `data` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn emm_grf_fit(
    data: *const EmmDataset,
    num_trees: usize,
    seed: u64,
    out: *mut *mut EmmCausalForest,
) -> EmmStatus {
    guard(|| {
        let data = ref_arg(data, "dataset")?;
        let mut cfg = CausalForestConfig::default();
        if num_trees > 0 {
            cfg.num_trees = num_trees;
        }
        let model = grf::fit_causal_forest(&data.0, &cfg, seed)?;
        put(out, Box::into_raw(Box::new(EmmCausalForest(model))))
    })
}

/// Out-of-bag effects for the training units; `len` must equal n.
///
/// # Safety
/// `model` must be a live handle and `out` hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn emm_grf_oob_ite(model: *const EmmCausalForest, out: *mut f64, len: usize) -> EmmStatus {
    guard(|| write_out(&ref_arg(model, "model")?.0.oob_ite, out, len))
}

/// Effect estimate and variance at a covariate point of length `p`.
///
/// # Safety
/// `x` must hold `p` values; `estimate` and `variance` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emm_grf_predict(
    model: *const EmmCausalForest,
    x: *const f64,
    p: usize,
    estimate: *mut f64,
    variance: *mut f64,
) -> EmmStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let est = grf::predict_ite(&model.0, slice_arg(x, p, "x")?)?;
        put(estimate, est.estimate)?;
        put(variance, est.variance)
    })
}

/// Doubly robust average effect and its standard error.
///
/// # Safety
/// `model` must be a live handle; `estimate` and `std_error` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emm_grf_ate(
    model: *const EmmCausalForest,
    estimate: *mut f64,
    std_error: *mut f64,
) -> EmmStatus {
    guard(|| {
        let ate = grf::average_treatment_effect(&ref_arg(model, "model")?.0);
        put(estimate, ate.estimate)?;
        put(std_error, ate.std_error)
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn emm_grf_free(model: *mut EmmCausalForest) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

fn bart_config(options: Option<&EmmMcmcOptions>) -> BartConfig {
    let mut cfg = BartConfig::default();
    if let Some(o) = options {
        if o.burn_in > 0 {
            cfg.burn_in = o.burn_in;
        }
        if o.draws > 0 {
            cfg.draws = o.draws;
        }
    }
    cfg
}

fn bcf_config(options: Option<&EmmMcmcOptions>) -> BcfConfig {
    let mut cfg = BcfConfig::default();
    if let Some(o) = options {
        if o.burn_in > 0 {
            cfg.burn_in = o.burn_in;
        }
        if o.draws > 0 {
            cfg.draws = o.draws;
        }
    }
    cfg
}

/// Counterfactual BART effects (posterior means); `options` may be NULL.
///
/// # Safety
/// `data` must be a live handle and `out` hold `len == n` values.
#[no_mangle]
pub unsafe extern "C" fn emm_bart_ite(
    data: *const EmmDataset,
    options: *const EmmMcmcOptions,
    seed: u64,
    out: *mut f64,
    len: usize,
) -> EmmStatus {
    guard(|| {
        let data = ref_arg(data, "dataset")?;
        let fit = bart_ite(&data.0, &bart_config(options.as_ref()), seed)?;
        write_out(&fit.ite.estimates, out, len)
    })
}

/// BCF effects (posterior means) with a logistic-regression propensity;
/// `options` may be NULL.
///
/// # Safety
/// `data` must be a live handle and `out` hold `len == n` values.
#[no_mangle]
pub unsafe extern "C" fn emm_bcf_ite(
    data: *const EmmDataset,
    options: *const EmmMcmcOptions,
    seed: u64,
    out: *mut f64,
    len: usize,
) -> EmmStatus {
    guard(|| {
        let data = ref_arg(data, "dataset")?;
        let pihat = logistic_propensity(&data.0)?;
        let model = fit_bcf(&data.0, &pihat, &bcf_config(options.as_ref()), seed)?;
        write_out(&predict_ite_bcf(&model)?.estimates, out, len)
    })
}

/// Logistic-regression propensity scores.
///
/// # Safety
/// `data` must be a live handle and `out` hold `len == n` values.
#[no_mangle]
pub unsafe extern "C" fn emm_propensity(data: *const EmmDataset, out: *mut f64, len: usize) -> EmmStatus {
    guard(|| write_out(&logistic_propensity(&ref_arg(data, "dataset")?.0)?, out, len))
}

/// Run the pipeline described by a config file and write its outputs.
/// Returns `EMM_STATUS_METHOD_FAILED` when the report records failures.
///
/// # Safety
/// `config_path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn emm_run_pipeline(config_path: *const c_char) -> EmmStatus {
    guard(|| {
        let config = PipelineConfig::from_file(str_arg(config_path, "config_path")?)?;
        let outcome = run_pipeline(&config)?;
        if outcome.report.succeeded() {
            Ok(())
        } else {
            let msgs: Vec<String> = outcome
                .report
                .failures
                .iter()
                .map(|f| format!("{}: {}", f.method.as_str(), f.error))
                .collect();
            Err(fail(EmmStatus::MethodFailed, msgs.join("; ")))
        }
    })
}
