use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use evbounds_ffi::*;

const CONFIG: &str = r#"{"family": "gaussian", "prior": "gaussian-product", "n": 40, "d": 2,
    "beta0": [0.5, -0.3], "calib_replicates": 200, "master_seed": 5}"#;

fn last_error() -> String {
    let p = evb_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_setup(json: &str) -> (EvbStatus, *mut EvbSetup) {
    let c = CString::new(json).unwrap();
    let mut out = ptr::null_mut();
    let status = unsafe { evb_setup_new(c.as_ptr(), &mut out) };
    (status, out)
}

#[test]
fn setup_bounds_and_oracle_round_trip() {
    let (status, setup) = new_setup(CONFIG);
    assert_eq!(status, EvbStatus::Ok);
    let (mut n, mut d) = (0usize, 0usize);
    assert_eq!(unsafe { evb_setup_shape(setup, &mut n, &mut d) }, EvbStatus::Ok);
    assert_eq!((n, d), (40, 2));

    let mut beta = [0.0; 2];
    assert_eq!(unsafe { evb_setup_beta_star(setup, beta.as_mut_ptr(), 2) }, EvbStatus::Ok);
    assert!((beta[0] - 0.5).abs() < 1e-8 && (beta[1] + 0.3).abs() < 1e-8);

    let mut y = vec![0.0; n];
    assert_eq!(unsafe { evb_simulate(setup, 0, y.as_mut_ptr(), n) }, EvbStatus::Ok);
    let mut b = EvbBounds::default();
    let status = unsafe { evb_bounds(setup, y.as_ptr(), n, &mut b) };
    assert!(matches!(status, EvbStatus::Ok | EvbStatus::Hypothesis));
    assert!(b.lower < b.upper);
    assert!(b.lower <= b.laplace + 10.0 * d as f64 && b.laplace <= b.upper + 10.0 * d as f64);

    let mut est = EvbEstimate::default();
    assert_eq!(unsafe { evb_oracle(setup, y.as_ptr(), n, &mut est) }, EvbStatus::Ok);
    assert!(est.log_z.is_finite());
    assert!(est.ess.is_nan());
    unsafe { evb_setup_free(setup) };
}

#[test]
fn errors_are_reported_with_messages() {
    let (status, setup) = new_setup(r#"{"famly": "gaussian"}"#);
    assert_eq!(status, EvbStatus::Config);
    assert!(setup.is_null());
    assert!(last_error().contains("famly"));

    let (status, _) = new_setup(r#"{"family": "gamma"}"#);
    assert_eq!(status, EvbStatus::Config);
    assert!(last_error().contains("gamma"));

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { evb_setup_new(ptr::null(), &mut out) }, EvbStatus::NullPointer);
    let mut b = EvbBounds::default();
    assert_eq!(unsafe { evb_bounds(ptr::null(), ptr::null(), 0, &mut b) }, EvbStatus::NullPointer);

    let bad = [0xffu8, 0];
    assert_eq!(unsafe { evb_setup_new(bad.as_ptr().cast(), &mut out) }, EvbStatus::InvalidUtf8);
}

#[test]
fn buffer_lengths_are_checked() {
    let (_, setup) = new_setup(CONFIG);
    let y = vec![0.0; 39];
    let mut b = EvbBounds::default();
    assert_eq!(unsafe { evb_bounds(setup, y.as_ptr(), 39, &mut b) }, EvbStatus::BufferLength);
    let mut beta = [0.0; 3];
    assert_eq!(unsafe { evb_setup_beta_star(setup, beta.as_mut_ptr(), 3) }, EvbStatus::BufferLength);
    unsafe { evb_setup_free(setup) };
    unsafe { evb_setup_free(ptr::null_mut()) };
}

#[test]
fn conjugate_evidence_matches_closed_form() {
    // n = 1, d = 1: y ~ N(0, σ² + τ²x²)
    let (x, y, sigma, tau) = ([2.0], [1.5], 1.0, 0.5);
    let mut out = 0.0;
    let status = unsafe { evb_conjugate_log_z(x.as_ptr(), 1, 1, y.as_ptr(), sigma, tau, &mut out) };
    assert_eq!(status, EvbStatus::Ok);
    let v: f64 = 1.0 + 0.25 * 4.0;
    let expected = -0.5 * (2.0 * std::f64::consts::PI * v).ln() - 0.5 * 1.5 * 1.5 / v;
    assert!((out - expected).abs() < 1e-12);

    let status = unsafe { evb_conjugate_log_z(x.as_ptr(), 1, 1, y.as_ptr(), -1.0, tau, &mut out) };
    assert_ne!(status, EvbStatus::Ok);
}

#[test]
fn coverage_json_is_parseable() {
    let cfg = CString::new(CONFIG.replace("\"master_seed\": 5", "\"master_seed\": 5, \"n_replicates\": 3")).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { evb_coverage_json(cfg.as_ptr(), &mut out) }, EvbStatus::Ok);
    let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { evb_string_free(out) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["n_replicates"], 3);
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(evb_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("evbounds.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["evb_setup_new", "evb_bounds", "EVB_STATUS_HYPOTHESIS", "typedef struct EvbSetup EvbSetup"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler found; skipping syntax check");
        return;
    };
    assert!(cc.status.success());
    let out = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
