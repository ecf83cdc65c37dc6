//! C ABI for `evbounds`.
//!
//! Every function returns an [`EvbStatus`]; on failure a description is kept
//! in thread-local storage and can be read with [`evb_last_error`]. Experiment
//! state lives behind the opaque [`EvbSetup`] handle, created from the same
//! JSON configuration the CLI reads. Matrices are dense and row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use evbounds::config::ExperimentConfig;
use evbounds::evidence::conjugate_log_z;
use evbounds::harness::{self, Setup};
use evbounds::Error;
use nalgebra::{DMatrix, DVector};

/// Result codes; the numeric values of 2–4 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvbStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Invalid configuration, name or argument.
    Config = 2,
    /// A numerical or reliability failure.
    Numerical = 3,
    /// The result was computed but a hypothesis of the theorem is not verified.
    Hypothesis = 4,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 5,
    /// A caller-provided buffer has the wrong length.
    BufferLength = 6,
    /// An internal panic was caught at the boundary.
    Panic = 7,
}

/// Opaque experiment state: design, pseudo-true fit, ellipsoid and constants.
pub struct EvbSetup {
    inner: Setup,
}

/// Two-sided bounds for one response vector.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EvbBounds {
    pub lower: f64,
    pub upper: f64,
    pub laplace: f64,
    pub ell_star: f64,
    pub log_det_h: f64,
    /// `C` of the empirical process.
    pub c_process: f64,
    /// Curvature ratio `c`.
    pub c_curvature: f64,
    /// Nonzero when every hypothesis of the theorem was verified.
    pub theorem_certified: i32,
}

/// An independent log-evidence estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EvbEstimate {
    pub log_z: f64,
    pub standard_error: f64,
    /// Integrand evaluations or importance draws used.
    pub n_evals: u64,
    /// Effective sample size, or NaN for deterministic methods.
    pub ess: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> EvbStatus {
    match err.exit_code() {
        2 => EvbStatus::Config,
        _ => EvbStatus::Numerical,
    }
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<EvbStatus, (EvbStatus, String)>) -> EvbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            EvbStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (EvbStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (EvbStatus, String) {
    (EvbStatus::NullPointer, format!("{name} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, (EvbStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (EvbStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn read_slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], (EvbStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn setup_ref<'a>(p: *const EvbSetup) -> Result<&'a Setup, (EvbStatus, String)> {
    p.as_ref().map(|s| &s.inner).ok_or_else(|| null("setup"))
}

unsafe fn response(setup: &Setup, y: *const f64, n: usize) -> Result<DVector<f64>, (EvbStatus, String)> {
    if n != setup.n() {
        return Err((
            EvbStatus::BufferLength,
            format!("response has length {n}, the design has {} rows", setup.n()),
        ));
    }
    Ok(DVector::from_column_slice(read_slice(y, n, "y")?))
}

/// Message describing the most recent failure on this thread, or null.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn evb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn evb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a setup from a JSON configuration. On success `*out` owns a handle
/// that must be released with [`evb_setup_free`].
///
/// # Safety
/// `config_json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evb_setup_new(config_json: *const c_char, out: *mut *mut EvbSetup) -> EvbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let cfg = ExperimentConfig::from_json(read_str(config_json, "config_json")?).map_err(lib_err)?;
        let setup = harness::prepare(&cfg, cfg.n, cfg.dimension(cfg.n), 0).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(EvbSetup { inner: setup }));
        Ok(EvbStatus::Ok)
    })
}

/// Release a setup; null is ignored.
///
/// # Safety
/// `setup` must come from [`evb_setup_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn evb_setup_free(setup: *mut EvbSetup) {
    if !setup.is_null() {
        drop(Box::from_raw(setup));
    }
}

/// Sample size and model dimension of a setup.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn evb_setup_shape(setup: *const EvbSetup, n: *mut usize, d: *mut usize) -> EvbStatus {
    guard(|| {
        let s = setup_ref(setup)?;
        if n.is_null() || d.is_null() {
            return Err(null("n or d"));
        }
        *n = s.n();
        *d = s.d();
        Ok(EvbStatus::Ok)
    })
}

/// Pseudo-true coefficients, written to `beta` of length `d`.
///
/// # Safety
/// `beta` must point to `d` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn evb_setup_beta_star(setup: *const EvbSetup, beta: *mut f64, d: usize) -> EvbStatus {
    guard(|| {
        let s = setup_ref(setup)?;
        if beta.is_null() {
            return Err(null("beta"));
        }
        if d != s.d() {
            return Err((EvbStatus::BufferLength, format!("beta has length {d}, the model has {}", s.d())));
        }
        std::slice::from_raw_parts_mut(beta, d).copy_from_slice(&s.truth.fit.beta_star);
        Ok(EvbStatus::Ok)
    })
}

/// Draw the response vector of replicate `replicate` into `y` of length `n`.
///
/// # Safety
/// `y` must point to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn evb_simulate(setup: *const EvbSetup, replicate: u64, y: *mut f64, n: usize) -> EvbStatus {
    guard(|| {
        let s = setup_ref(setup)?;
        if y.is_null() {
            return Err(null("y"));
        }
        if n != s.n() {
            return Err((EvbStatus::BufferLength, format!("y has length {n}, the design has {} rows", s.n())));
        }
        let ds = harness::draw_dataset(s, 0, replicate).map_err(lib_err)?;
        std::slice::from_raw_parts_mut(y, n).copy_from_slice(ds.y.as_slice());
        Ok(EvbStatus::Ok)
    })
}

/// Bounds for the response `y`. Returns [`EvbStatus::Hypothesis`] (with `*out`
/// filled) when some hypothesis of the theorem is not verified.
///
/// # Safety
/// `y` must point to `n` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn evb_bounds(setup: *const EvbSetup, y: *const f64, n: usize, out: *mut EvbBounds) -> EvbStatus {
    guard(|| {
        let s = setup_ref(setup)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let y = response(s, y, n)?;
        let b = s.bounds(&y, 0, 0).map_err(lib_err)?;
        *out = EvbBounds {
            lower: b.lower,
            upper: b.upper,
            laplace: b.laplace,
            ell_star: b.ell_star,
            log_det_h: b.log_det_h,
            c_process: b.constants.c_process,
            c_curvature: b.constants.c_curvature,
            theorem_certified: b.theorem_certified as i32,
        };
        if b.theorem_certified {
            Ok(EvbStatus::Ok)
        } else {
            set_error("a hypothesis of the theorem is not verified".into());
            Ok(EvbStatus::Hypothesis)
        }
    })
}

/// Log evidence of `y` from the configured oracle.
///
/// # Safety
/// `y` must point to `n` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn evb_oracle(setup: *const EvbSetup, y: *const f64, n: usize, out: *mut EvbEstimate) -> EvbStatus {
    guard(|| {
        let s = setup_ref(setup)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let y = response(s, y, n)?;
        let est = s
            .oracle(&y, 0, 0)
            .map_err(lib_err)?
            .ok_or_else(|| (EvbStatus::Config, "oracle is set to none".to_string()))?;
        *out = EvbEstimate {
            log_z: est.log_z,
            standard_error: est.standard_error,
            n_evals: est.n_evals_or_draws as u64,
            ess: est.ess.unwrap_or(f64::NAN),
        };
        Ok(EvbStatus::Ok)
    })
}

/// Exact log evidence of the Gaussian linear model `y ~ N(Xβ, σ²I)`,
/// `β ~ N(0, τ²I)`. `x` is `n × d`, row-major.
///
/// # Safety
/// `x` must point to `n·d` doubles, `y` to `n`, and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn evb_conjugate_log_z(
    x: *const f64,
    n: usize,
    d: usize,
    y: *const f64,
    sigma: f64,
    tau: f64,
    out: *mut f64,
) -> EvbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = n.checked_mul(d).ok_or_else(|| (EvbStatus::BufferLength, "n·d overflows".to_string()))?;
        let x = DMatrix::from_row_slice(n, d, read_slice(x, len, "x")?);
        let y = DVector::from_column_slice(read_slice(y, n, "y")?);
        *out = conjugate_log_z(&x, &y, sigma, tau).map_err(lib_err)?.log_z;
        Ok(EvbStatus::Ok)
    })
}

/// Run a coverage experiment and return its summary as JSON in `*out`,
/// to be released with [`evb_string_free`].
///
/// # Safety
/// `config_json` must be nul-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn evb_coverage_json(config_json: *const c_char, out: *mut *mut c_char) -> EvbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let cfg = ExperimentConfig::from_json(read_str(config_json, "config_json")?).map_err(lib_err)?;
        let report = harness::run_coverage(&cfg).map_err(lib_err)?;
        let text = serde_json::to_string(&report).map_err(|e| (EvbStatus::Numerical, e.to_string()))?;
        *out = CString::new(text).expect("JSON has no nul bytes").into_raw();
        Ok(EvbStatus::Ok)
    })
}

/// Release a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn evb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
