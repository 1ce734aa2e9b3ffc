//! C interface to `isac-core`.
//!
//! Every fallible function returns an [`IsacStatus`]. On failure a message is
//! kept per thread and can be read with [`isac_last_error`]. Handles are
//! opaque and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use isac_core::channel::los_gain;
use isac_core::constellation::ConstellationSpec;
use isac_core::gamp::{Denoiser, ScatterPrior, SymbolPrior};
use isac_core::harness::{write_outputs, Experiment, ExperimentConfig, Method, TrialPair};
use isac_core::Error;
use num_complex::Complex64;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsacStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Domain = 4,
    Dimension = 5,
    Diverged = 6,
    Io = 7,
    /// The requested trial aborted; the message says why.
    Aborted = 8,
    Panic = 9,
    Other = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsacMethod {
    Alternating = 0,
    Baseline = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IsacComplex {
    pub re: f64,
    pub im: f64,
}

/// Posterior mean and variance of one scalar unknown.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IsacPosterior {
    pub mean: IsacComplex,
    pub var: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IsacMetrics {
    pub detection_rate_paper: f64,
    pub detection_tpr: f64,
    pub ser: f64,
    pub mse: f64,
    pub iterations: usize,
}

/// Configuration plus precomputed channels.
pub struct IsacExperiment {
    inner: Experiment,
}

/// Outcome of both methods on one trial.
pub struct IsacTrialResult {
    inner: TrialPair,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> IsacStatus {
    match e {
        Error::Config { .. } => IsacStatus::Config,
        Error::Domain(_) | Error::NonFinite(_) | Error::Invariant { .. } => IsacStatus::Domain,
        Error::Dimension(_) => IsacStatus::Dimension,
        Error::Diverged { .. } => IsacStatus::Diverged,
        Error::Io(_) | Error::Cache(_) => IsacStatus::Io,
        _ => IsacStatus::Other,
    }
}

fn fail(status: IsacStatus, message: &str) -> IsacStatus {
    set_error(message);
    status
}

/// Runs `f`, turning errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), IsacStatus>) -> IsacStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IsacStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(IsacStatus::Panic, "internal panic"),
    }
}

fn core<T>(r: isac_core::Result<T>) -> Result<T, IsacStatus> {
    r.map_err(|e| fail(status_of(&e), &e.to_string()))
}

fn non_null<'a, T>(p: *const T) -> Result<&'a T, IsacStatus> {
    // SAFETY: callers pass either null or a pointer obtained from this library
    unsafe { p.as_ref() }.ok_or_else(|| fail(IsacStatus::NullPointer, "null pointer argument"))
}

fn out<'a, T>(p: *mut T) -> Result<&'a mut T, IsacStatus> {
    // SAFETY: as above, for caller-owned output slots
    unsafe { p.as_mut() }.ok_or_else(|| fail(IsacStatus::NullPointer, "null output pointer"))
}

fn text<'a>(p: *const c_char) -> Result<&'a str, IsacStatus> {
    if p.is_null() {
        return Err(fail(IsacStatus::NullPointer, "null string argument"));
    }
    // SAFETY: non-null, nul-terminated per the API contract
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| fail(IsacStatus::InvalidArgument, "string is not UTF-8"))
}

/// Message of the last failure on this thread, or null. Valid until the next call into the library.
#[no_mangle]
pub extern "C" fn isac_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn isac_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Free-space gain from `(ax, ay)` to `(bx, by)` in metres.
#[no_mangle]
pub extern "C" fn isac_los_gain(ax: f64, ay: f64, bx: f64, by: f64, wavelength: f64, gain: *mut IsacComplex) -> IsacStatus {
    guard(|| {
        let g = core(los_gain([ax, ay], [bx, by], wavelength))?;
        *out(gain)? = IsacComplex { re: g.re, im: g.im };
        Ok(())
    })
}

/// QPSK symbol denoiser: spike with probability `1 - sparsity`, otherwise a
/// Gaussian of standard deviation `std_dev` around each point.
#[no_mangle]
pub extern "C" fn isac_denoise_symbol_qpsk(
    sparsity: f64,
    std_dev: f64,
    r: IsacComplex,
    tau: f64,
    posterior: *mut IsacPosterior,
) -> IsacStatus {
    guard(|| {
        let prior = core(SymbolPrior::for_constellation(ConstellationSpec::Qpsk, sparsity, std_dev))?;
        let p = core(prior.denoise(Complex64::new(r.re, r.im), tau))?;
        *out(posterior)? = IsacPosterior { mean: IsacComplex { re: p.mean.re, im: p.mean.im }, var: p.var };
        Ok(())
    })
}

/// Scattering-coefficient denoiser with a Gaussian slab truncated to `(0, 1]`.
/// The imaginary part of the returned mean is zero.
#[no_mangle]
pub extern "C" fn isac_denoise_scatter(
    sparsity: f64,
    mean: f64,
    std_dev: f64,
    r: f64,
    tau: f64,
    posterior: *mut IsacPosterior,
) -> IsacStatus {
    guard(|| {
        let prior = core(ScatterPrior::new(sparsity, mean, std_dev))?;
        let p = core(prior.denoise(r, tau))?;
        *out(posterior)? = IsacPosterior { mean: IsacComplex { re: p.mean, im: 0.0 }, var: p.var };
        Ok(())
    })
}

fn experiment(config: ExperimentConfig, handle: *mut *mut IsacExperiment) -> Result<(), IsacStatus> {
    let slot = out(handle)?;
    *slot = ptr::null_mut();
    core(config.validate())?;
    let inner = core(Experiment::new(config))?;
    *slot = Box::into_raw(Box::new(IsacExperiment { inner }));
    Ok(())
}

/// Experiment with the built-in desk-scale configuration.
#[no_mangle]
pub extern "C" fn isac_experiment_new_desk(handle: *mut *mut IsacExperiment) -> IsacStatus {
    guard(|| experiment(ExperimentConfig::desk(), handle))
}

/// Experiment from TOML text, with missing keys taking their desk defaults.
#[no_mangle]
pub extern "C" fn isac_experiment_from_toml(toml: *const c_char, handle: *mut *mut IsacExperiment) -> IsacStatus {
    guard(|| {
        let config = core(ExperimentConfig::from_toml(text(toml)?))?;
        experiment(config, handle)
    })
}

#[no_mangle]
pub extern "C" fn isac_experiment_free(handle: *mut IsacExperiment) {
    if !handle.is_null() {
        // SAFETY: created by Box::into_raw in this library and freed once
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Number of grid cells.
#[no_mangle]
pub extern "C" fn isac_experiment_cells(handle: *const IsacExperiment, cells: *mut usize) -> IsacStatus {
    guard(|| {
        *out(cells)? = non_null(handle)?.inner.config.cells().len();
        Ok(())
    })
}

/// Trials per cell.
#[no_mangle]
pub extern "C" fn isac_experiment_trials(handle: *const IsacExperiment, trials: *mut usize) -> IsacStatus {
    guard(|| {
        *out(trials)? = non_null(handle)?.inner.config.trials;
        Ok(())
    })
}

/// Runs both methods on trial `trial` of cell `cell`. The result is
/// identical to the corresponding sweep row.
#[no_mangle]
pub extern "C" fn isac_experiment_run_trial(
    handle: *const IsacExperiment,
    cell: usize,
    trial: usize,
    result: *mut *mut IsacTrialResult,
) -> IsacStatus {
    guard(|| {
        let slot = out(result)?;
        *slot = ptr::null_mut();
        let e = &non_null(handle)?.inner;
        let cells = e.config.cells();
        let Some(c) = cells.get(cell) else {
            return Err(fail(IsacStatus::InvalidArgument, &format!("cell {cell} out of range ({} cells)", cells.len())));
        };
        *slot = Box::into_raw(Box::new(IsacTrialResult { inner: e.run_trial(c, trial) }));
        Ok(())
    })
}

/// Metrics of one method. Returns `ABORTED` with the reason when that run failed.
#[no_mangle]
pub extern "C" fn isac_trial_result_metrics(
    result: *const IsacTrialResult,
    method: IsacMethod,
    metrics: *mut IsacMetrics,
) -> IsacStatus {
    guard(|| {
        let pair = &non_null(result)?.inner;
        let slot = out(metrics)?;
        let method = match method {
            IsacMethod::Alternating => Method::Ao,
            IsacMethod::Baseline => Method::Baseline,
        };
        match pair.get(method) {
            Ok(r) => {
                *slot = IsacMetrics {
                    detection_rate_paper: r.metrics.detection_rate_paper,
                    detection_tpr: r.metrics.detection_tpr,
                    ser: r.metrics.ser,
                    mse: r.metrics.mse,
                    iterations: r.iterations,
                };
                Ok(())
            }
            Err(m) => Err(fail(IsacStatus::Aborted, m)),
        }
    })
}

/// Initial power ratio of the trial, NaN when the trial aborted.
#[no_mangle]
pub extern "C" fn isac_trial_result_initial_ratio(result: *const IsacTrialResult, ratio: *mut f64) -> IsacStatus {
    guard(|| {
        *out(ratio)? = non_null(result)?.inner.delta0;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn isac_trial_result_free(result: *mut IsacTrialResult) {
    if !result.is_null() {
        // SAFETY: created by Box::into_raw in this library and freed once
        drop(unsafe { Box::from_raw(result) });
    }
}

/// Runs the whole grid and writes the CSV outputs into `out_dir`.
#[no_mangle]
pub extern "C" fn isac_experiment_sweep(handle: *const IsacExperiment, out_dir: *const c_char) -> IsacStatus {
    guard(|| {
        let e = &non_null(handle)?.inner;
        let dir = Path::new(text(out_dir)?);
        let result = e.run();
        core(write_outputs(&result, &e.config, dir))
    })
}
