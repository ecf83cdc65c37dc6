//! The `evbounds` binary: subcommands, CSV output and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const GAUSSIAN: &str = r#"{"family": "gaussian", "prior": "gaussian-product", "n": 60, "d": 2,
    "beta0": [0.5, -0.3], "n_replicates": 5, "calib_replicates": 200, "master_seed": 3}"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evbounds")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn single_dataset_subcommands_emit_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.json", GAUSSIAN);

    let v = json(&run(&["pseudo-true", "--config", &cfg]));
    assert!((v["beta_star"][0].as_f64().unwrap() - 0.5).abs() < 1e-8);
    assert!(v["converged"].as_bool().unwrap());

    let h = dir.path().join("h.csv");
    let v = json(&run(&["curvature", "--config", &cfg, "--csv", h.to_str().unwrap()]));
    assert_eq!(v["c"], 1.0);
    assert_eq!(fs::read_to_string(&h).unwrap().lines().count(), 2);

    let v = json(&run(&["process-constants", "--config", &cfg]));
    assert_eq!(v["source"], "empirical-quantile");
    assert!(v["C"].as_f64().unwrap() > 0.0);

    let data = dir.path().join("data.csv");
    let v = json(&run(&["oracle", "--config", &cfg, "--data", data.to_str().unwrap()]));
    assert_eq!(v["method"], "conjugate");
    let text = fs::read_to_string(&data).unwrap();
    assert!(text.starts_with("y,true_mean,x1,x2"));
    assert_eq!(text.lines().count(), 61);

    let row = dir.path().join("row.csv");
    let v = json(&run(&["bounds", "--config", &cfg, "--csv", row.to_str().unwrap()]));
    assert!(v["lower"].as_f64().unwrap() < v["upper"].as_f64().unwrap());
    let text = fs::read_to_string(&row).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("ell_star,log_det_H"));
}

#[test]
fn coverage_overrides_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.json", GAUSSIAN);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let v = json(&run(&["coverage", "--config", &cfg, "--replicates", "3", "--seed", "9", "--jobs", "1", "--csv", a.to_str().unwrap()]));
    assert_eq!(v["n_replicates"], 3);
    assert!(v.get("guaranteed_rate").is_some());
    assert!(v.get("rows").is_none());
    json(&run(&["coverage", "--config", &cfg, "--replicates", "3", "--seed", "9", "--jobs", "1", "--csv", b.to_str().unwrap()]));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert!(fs::read_to_string(&a).unwrap().starts_with("# evbounds coverage v1\n"));
}

#[test]
fn compare_takes_several_configs() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", &GAUSSIAN.replace("\"master_seed\": 3", "\"master_seed\": 3, \"label\": \"a\""));
    let b = write(dir.path(), "b.json", &GAUSSIAN.replace("\"master_seed\": 3", "\"master_seed\": 3, \"label\": \"b\""));
    let v = json(&run(&["compare", "--config", &a, "--config", &b]));
    assert_eq!(v["candidates"].as_array().unwrap().len(), 2);
    assert_eq!(v["relations"][0][1], "not-certified");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = write(dir.path(), "bad.json", r#"{"famly": "gaussian"}"#);
    let out = run(&["bounds", "--config", &bad_key]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("famly"));

    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["bounds", "--config", missing.to_str().unwrap()]).status.code(), Some(2));

    // quadrature is only offered for d <= 3
    let d4 = write(
        dir.path(),
        "d4.json",
        r#"{"family": "logistic", "n": 80, "d": 4, "oracle": "quadrature", "calib_replicates": 200}"#,
    );
    let out = run(&["oracle", "--config", &d4]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("quadrature"));

    // a Poisson ellipsoid this wide has c far below 1/2, so the theorem's hypotheses fail
    let wide = write(
        dir.path(),
        "wide.json",
        r#"{"family": "poisson", "n": 50, "d": 2, "beta0": [0.2, 0.1], "radius_c1": 6, "calib_replicates": 200}"#,
    );
    assert_eq!(run(&["bounds", "--config", &wide]).status.code(), Some(0));
    assert_eq!(run(&["bounds", "--config", &wide, "--strict"]).status.code(), Some(4));

    assert_eq!(run(&["concentration", "--config", &write(dir.path(), "c.json", r#"{"prior": "gaussian-product", "n_grid": [100]}"#)]).status.code(), Some(2));
}
