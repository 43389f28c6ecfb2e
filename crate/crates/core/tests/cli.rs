use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BASE: &str = r#"{
    "grid": {"axes": [{"n": 256, "x_min": -16.0, "x_max": 16.0}]},
    "potential": {"kind": "harmonic", "params": {"omega": [1.0]}},
    "scale": {"kind": "sqrt_linear", "epsilon": 0.3},
    "time": {"t_end": 0.5, "dt": 0.001},
    "output_times": [0.25, 0.5],
    "initial_state": {"kind": "gaussian", "center": [0.5], "momentum": [0.2], "sigma": [1.0]}
}"#;

fn scalemap(dir: &Path, mode: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_scalemap"))
        .arg(mode)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join(mode))
        .args(extra)
        .env("SCALEMAP_THREADS", "2")
        .output()
        .unwrap()
}

fn manifest(dir: &Path, mode: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(mode).join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn compare_exits_zero_and_writes_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = scalemap(dir.path(), "compare", BASE, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = fs::read_to_string(dir.path().join("compare/comparison.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,l2_error,max_error,norm_direct,norm_mapped"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[1] < 1e-5));
    let m = manifest(dir.path(), "compare");
    assert_eq!(m["status"], "pass");
    assert_eq!(m["mode"], "compare");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    for f in m["files"].as_array().unwrap() {
        assert!(dir.path().join("compare").join(f.as_str().unwrap()).exists(), "{f}");
    }
}

#[test]
fn runs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let wide = BASE.replace("\"n\": 256, \"x_min\": -16.0, \"x_max\": 16.0", "\"n\": 512, \"x_min\": -20.0, \"x_max\": 20.0");
    for d in [&a, &b] {
        assert_eq!(scalemap(d.path(), "identity-check", &wide, &["--seed", "7"]).status.code(), Some(0));
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("identity-check/identity.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let c = tempfile::tempdir().unwrap();
    assert_eq!(scalemap(c.path(), "identity-check", &wide, &["--seed", "8"]).status.code(), Some(0));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn tight_tolerance_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = scalemap(dir.path(), "compare", BASE, &["--tol", "1e-14"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
    assert_eq!(manifest(dir.path(), "compare")["status"], "fail");
}

#[test]
fn sabotaged_chirp_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = BASE.replacen('{', "{\"sabotage_chirp\": true,", 1);
    assert_eq!(scalemap(dir.path(), "compare", &text, &[]).status.code(), Some(2));
}

#[test]
fn validation_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    for bad in [
        BASE.replace("\"epsilon\": 0.3", "\"epsilon\": 0.0"),
        BASE.replace("\"dt\": 0.001", "\"dt\": -0.001"),
        BASE.replace("\"n\": 256", "\"n\": 4"),
        BASE.replace("sqrt_linear", "cubic"),
        "not json".to_string(),
    ] {
        let out = scalemap(dir.path(), "direct", &bad, &[]);
        assert_eq!(out.status.code(), Some(3), "{bad}");
    }
    let out = Command::new(env!("CARGO_BIN_EXE_scalemap")).args(["direct", "--config", "/nonexistent.json", "--out", "x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let out = Command::new(env!("CARGO_BIN_EXE_scalemap")).arg("wobble").output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn boundary_leak_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let text = BASE
        .replace("\"omega\": [1.0]", "\"omega\": [0.1]")
        .replace("\"momentum\": [0.2]", "\"momentum\": [12.0]")
        .replace("\"t_end\": 0.5", "\"t_end\": 2.0")
        .replace("\"output_times\": [0.25, 0.5],", "");
    let out = scalemap(dir.path(), "direct", &text, &[]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn direct_writes_observables_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let text = BASE.replace("\"dt\": 0.001", "\"dt\": 0.001, \"snapshot_stride\": 100");
    assert_eq!(scalemap(dir.path(), "direct", &text, &[]).status.code(), Some(0));
    let obs = fs::read_to_string(dir.path().join("direct/observables.csv")).unwrap();
    assert!(obs.starts_with("t,norm,mean_x0,mean_p0,energy,leak\n"));
    let snaps = fs::read_dir(dir.path().join("direct/snapshots")).unwrap().count();
    assert!(snaps >= 6, "{snaps}");
}

#[test]
fn every_mode_runs() {
    let text = BASE.replacen('{', "{\"converge\": {\"dt_ladder\": [0.04, 0.02, 0.01, 0.005], \"spatial_ladder\": [64, 128]},", 1);
    for mode in ["mapped", "converge", "analytic"] {
        let dir = tempfile::tempdir().unwrap();
        let out = scalemap(dir.path(), mode, &text, &[]);
        assert_eq!(out.status.code(), Some(0), "{mode}: {}", String::from_utf8_lossy(&out.stdout));
        assert_eq!(manifest(dir.path(), mode)["mode"], mode);
    }
}
