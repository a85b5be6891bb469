//! C bindings for the forecasting and fitting core.
//!
//! The surface is deliberately small: load a checkpoint, forecast from a
//! context buffer, score Student's-t predictions, and fit a power law.
//! Every fallible function returns an [`LtmStatus`]; on failure,
//! [`ltm_last_error`] holds a message for the calling thread. No function
//! retains a caller pointer past its own return, and a loaded model is
//! immutable, so one handle may be shared across threads as long as
//! [`ltm_model_free`] happens after every other use.
//!
//! The generated header lives in `include/ltmlab.h` and is kept current by
//! the build script.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ltmlab::metrics::{crps_studentt, studentt_logpdf};
use ltmlab::model::{forecast_rollout, Model, ModelError};
use ltmlab::scaling::{fit_power_law, ScalingError};

/// Result of every fallible call. Anything but `Ok` leaves a message in
/// [`ltm_last_error`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LtmStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument was out of domain (bad scale, empty context, ...).
    InvalidArgument = 2,
    /// The operating system reported an I/O failure.
    IoError = 3,
    /// The file exists but is not a usable checkpoint.
    BadCheckpoint = 4,
    /// The computation ran but could not produce a result (degenerate
    /// fit, no convergence).
    NumericError = 5,
    /// An internal invariant failed; the library state is still sound.
    Panic = 6,
}

/// A loaded model checkpoint. Opaque; create with [`ltm_model_load`],
/// release with [`ltm_model_free`].
pub struct LtmModel {
    inner: Model,
}

/// Power law L(A) = 10^(b0 * (log10_a0 - log10 A)) fitted by least squares
/// on log coordinates. `rss` is the residual sum of squares in ln space.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LtmPowerLawFit {
    pub b0: f64,
    pub log10_a0: f64,
    pub rss: f64,
    pub n_points: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

/// Records `message` for [`ltm_last_error`] and passes `status` through.
fn fail(status: LtmStatus, message: impl std::fmt::Display) -> LtmStatus {
    let text = message.to_string().replace('\0', "?");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).expect("nul bytes replaced above");
    });
    status
}

/// Runs `body`, converting any panic into [`LtmStatus::Panic`] so unwinding
/// never crosses the C boundary.
fn guarded<F: FnOnce() -> LtmStatus>(body: F) -> LtmStatus {
    catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|payload| {
        let what = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic payload".into());
        fail(LtmStatus::Panic, format!("internal panic: {what}"))
    })
}

fn model_status(error: &ModelError) -> LtmStatus {
    match error {
        ModelError::Io(_) => LtmStatus::IoError,
        ModelError::Format(_) | ModelError::InvalidConfig(_) => LtmStatus::BadCheckpoint,
        _ => LtmStatus::InvalidArgument,
    }
}

fn scaling_status(error: &ScalingError) -> LtmStatus {
    match error {
        ScalingError::Degenerate(_) | ScalingError::NoConvergence(_) => LtmStatus::NumericError,
        _ => LtmStatus::InvalidArgument,
    }
}

/// The library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ltm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message from the most recent failing call on this thread, or an empty
/// string. The pointer stays valid until the next failing call on the same
/// thread.
#[no_mangle]
pub extern "C" fn ltm_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Loads a model checkpoint from a NUL-terminated UTF-8 path and stores the
/// new handle in `*out`. On any failure `*out` is left untouched.
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out` to writable
/// pointer storage.
#[no_mangle]
pub unsafe extern "C" fn ltm_model_load(path: *const c_char, out: *mut *mut LtmModel) -> LtmStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return fail(LtmStatus::NullArgument, "ltm_model_load requires path and out");
        }
        let path = match CStr::from_ptr(path).to_str() {
            Ok(p) => p,
            Err(_) => return fail(LtmStatus::InvalidArgument, "path is not valid UTF-8"),
        };
        match Model::load(Path::new(path)) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(LtmModel { inner: model }));
                LtmStatus::Ok
            }
            Err(e) => fail(model_status(&e), format!("loading {path}: {e}")),
        }
    })
}

/// Releases a handle from [`ltm_model_load`]. Null is a no-op.
///
/// # Safety
/// `model` must be a pointer returned by [`ltm_model_load`] that has not
/// been freed already.
#[no_mangle]
pub unsafe extern "C" fn ltm_model_free(model: *mut LtmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Stores the model's trainable parameter count in `*out`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ltm_model_num_parameters(
    model: *const LtmModel,
    out: *mut u64,
) -> LtmStatus {
    guarded(|| {
        let (Some(model), false) = (model.as_ref(), out.is_null()) else {
            return fail(LtmStatus::NullArgument, "ltm_model_num_parameters requires model and out");
        };
        *out = model.inner.num_parameters();
        LtmStatus::Ok
    })
}

/// Stores the model's context window length (the number of past points one
/// forward pass can see) in `*out`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ltm_model_context_length(
    model: *const LtmModel,
    out: *mut usize,
) -> LtmStatus {
    guarded(|| {
        let (Some(model), false) = (model.as_ref(), out.is_null()) else {
            return fail(LtmStatus::NullArgument, "ltm_model_context_length requires model and out");
        };
        *out = model.inner.config().l_seq;
        LtmStatus::Ok
    })
}

/// Autoregressive forecast: `n_samples` sampled continuations of `context`,
/// reduced per step to the sample mean and the 16th/84th percentiles.
/// Writes `horizon` doubles to each of `mean_out`, `lo_out`, and `hi_out`.
/// Identical inputs and seed produce identical output. The context is used
/// as-is; apply the training corpus' normalization before calling when the
/// checkpoint was trained on normalized data.
///
/// With `horizon == 0` the call succeeds without touching the output
/// buffers, which may then be null.
///
/// # Safety
/// `context` must point to `context_len` doubles; the three output buffers
/// must each hold `horizon` doubles (when `horizon > 0`).
#[no_mangle]
pub unsafe extern "C" fn ltm_model_forecast(
    model: *const LtmModel,
    context: *const f64,
    context_len: usize,
    horizon: usize,
    n_samples: usize,
    seed: u64,
    mean_out: *mut f64,
    lo_out: *mut f64,
    hi_out: *mut f64,
) -> LtmStatus {
    guarded(|| {
        let Some(model) = model.as_ref() else {
            return fail(LtmStatus::NullArgument, "ltm_model_forecast requires a model");
        };
        if context.is_null() {
            return fail(LtmStatus::NullArgument, "ltm_model_forecast requires a context buffer");
        }
        if horizon > 0 && (mean_out.is_null() || lo_out.is_null() || hi_out.is_null()) {
            return fail(
                LtmStatus::NullArgument,
                "ltm_model_forecast requires mean, lo, and hi buffers when horizon > 0",
            );
        }
        let context = std::slice::from_raw_parts(context, context_len);
        match forecast_rollout(&model.inner, context, horizon, n_samples, seed) {
            Ok(forecast) => {
                if horizon > 0 {
                    std::slice::from_raw_parts_mut(mean_out, horizon)
                        .copy_from_slice(&forecast.mean);
                    std::slice::from_raw_parts_mut(lo_out, horizon).copy_from_slice(&forecast.lo);
                    std::slice::from_raw_parts_mut(hi_out, horizon).copy_from_slice(&forecast.hi);
                }
                LtmStatus::Ok
            }
            Err(e) => fail(model_status(&e), format!("forecast: {e}")),
        }
    })
}

/// Log density of the location-scale Student's-t at `y`, written to `*out`.
/// Requires `sigma > 0` and `nu > 0`, both finite.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ltm_studentt_logpdf(
    y: f64,
    mu: f64,
    sigma: f64,
    nu: f64,
    out: *mut f64,
) -> LtmStatus {
    guarded(|| {
        if out.is_null() {
            return fail(LtmStatus::NullArgument, "ltm_studentt_logpdf requires out");
        }
        match studentt_logpdf(y, mu, sigma, nu) {
            Ok(v) => {
                *out = v;
                LtmStatus::Ok
            }
            Err(e) => fail(LtmStatus::InvalidArgument, e),
        }
    })
}

/// Closed-form CRPS of the location-scale Student's-t against the
/// observation `y`, written to `*out`. Requires `sigma > 0` and `nu > 1`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ltm_crps_studentt(
    y: f64,
    mu: f64,
    sigma: f64,
    nu: f64,
    out: *mut f64,
) -> LtmStatus {
    guarded(|| {
        if out.is_null() {
            return fail(LtmStatus::NullArgument, "ltm_crps_studentt requires out");
        }
        match crps_studentt(y, mu, sigma, nu) {
            Ok(v) => {
                *out = v;
                LtmStatus::Ok
            }
            Err(e) => fail(LtmStatus::InvalidArgument, e),
        }
    })
}

/// Least-squares power law through `n_points` pairs of positive finite
/// `(abscissae[i], losses[i])`, fitted on log coordinates and written to
/// `*out`. Needs at least two points.
///
/// # Safety
/// `abscissae` and `losses` must each point to `n_points` doubles and
/// `out` to an [`LtmPowerLawFit`].
#[no_mangle]
pub unsafe extern "C" fn ltm_fit_power_law(
    abscissae: *const f64,
    losses: *const f64,
    n_points: usize,
    out: *mut LtmPowerLawFit,
) -> LtmStatus {
    guarded(|| {
        if abscissae.is_null() || losses.is_null() || out.is_null() {
            return fail(
                LtmStatus::NullArgument,
                "ltm_fit_power_law requires abscissae, losses, and out",
            );
        }
        let a = std::slice::from_raw_parts(abscissae, n_points);
        let l = std::slice::from_raw_parts(losses, n_points);
        let points: Vec<(f64, f64)> = a.iter().copied().zip(l.iter().copied()).collect();
        match fit_power_law(&points, None) {
            Ok(fit) => {
                *out = LtmPowerLawFit {
                    b0: fit.b0,
                    log10_a0: fit.log10_a0,
                    rss: fit.rss,
                    n_points: fit.n_points,
                };
                LtmStatus::Ok
            }
            Err(e) => fail(scaling_status(&e), e),
        }
    })
}
