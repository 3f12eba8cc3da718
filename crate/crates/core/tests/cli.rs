use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn netcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netcert")).args(args).output().expect("binary runs")
}

fn write_state(dir: &Path, name: &str, dims: &[usize], amps: &[[f64; 2]]) -> PathBuf {
    let path = dir.join(name);
    let v = serde_json::json!({ "schema_version": 1, "local_dims": dims, "amplitudes": amps });
    std::fs::write(&path, v.to_string()).unwrap();
    path
}

/// (|00> + i|11>)/sqrt 2
fn phase_bell(dir: &Path) -> PathBuf {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    write_state(dir, "phase.json", &[2, 2], &[[h, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, h]])
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_row_counts() {
    let dir = TempDir::new().unwrap();
    let plus = write_state(dir.path(), "plus.json", &[2], &[[0.6, 0.0], [0.0, 0.8]]);
    let out = netcert(&["simulate", s(&plus)]);
    assert!(out.status.success());
    let table: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 21);
    assert_eq!(table["scenario"]["N"], 1);

    let out = netcert(&["simulate", "--variant", "fully", s(&plus)]);
    let table: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 7 * 5);
}

#[test]
fn certify_exit_codes() {
    let dir = TempDir::new().unwrap();
    let target = phase_bell(dir.path());
    let other = write_state(dir.path(), "other.json", &[2, 2], &[[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]);
    let table = dir.path().join("table.json");
    assert!(netcert(&["simulate", s(&target), "--out", s(&table)]).status.success());

    let ok = netcert(&["certify", s(&table), s(&target)]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("result: PASS"));

    let wrong = netcert(&["certify", s(&table), s(&other)]);
    assert_eq!(wrong.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&wrong.stdout).contains("tomography residual"));

    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{").unwrap();
    assert_eq!(netcert(&["certify", s(&garbage), s(&target)]).status.code(), Some(2));
}

#[test]
fn pt_listing_for_a_bell_pair() {
    let dir = TempDir::new().unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let phi = write_state(dir.path(), "phi.json", &[2, 2], &[[h, 0.0], [0.0, 0.0], [0.0, 0.0], [h, 0.0]]);
    let out = netcert(&["pt", s(&phi)]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let eig: Vec<f64> = report["eigenvalues"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let expected = [0.5, 0.5, 0.5, -0.5];
    for (a, b) in eig.iter().zip(expected) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((report["sum"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn extract_reports_alpha_and_rejects_flags_in_the_fully_variant() {
    let dir = TempDir::new().unwrap();
    let target = phase_bell(dir.path());
    let out = netcert(&["extract", s(&target), "--model", "flagged:0.3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((report["alpha"].as_f64().unwrap() - 0.3).abs() < 1e-10);

    let out = netcert(&["extract", s(&target), "--model", "flagged:0.3", "--variant", "fully"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("source independence"));

    let out = netcert(&["extract", s(&target), "--model", "noisy:0.8"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn qudits_need_explicit_encoding() {
    let dir = TempDir::new().unwrap();
    let r = 1.0 / 3f64.sqrt();
    let qutrit = write_state(dir.path(), "qutrit.json", &[3], &[[r, 0.0], [r, 0.0], [0.0, r]]);
    assert_eq!(netcert(&["simulate", s(&qutrit)]).status.code(), Some(2));
    let out = netcert(&["simulate", "--encode-qudit", s(&qutrit)]);
    assert!(out.status.success());
    let table: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(table["scenario"]["N"], 2);
}
