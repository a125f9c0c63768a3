//! Exit codes and file placement of the command-line tool.

use std::path::Path;
use std::process::{Command, Output};

fn surrogates(args: &[&str], env_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_surrogates"));
    cmd.args(args).env_remove("SURROGATES_OUT_DIR");
    if let Some(dir) = env_dir {
        cmd.env("SURROGATES_OUT_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn generate_writes_cohort_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/d.csv");
    let o = surrogates(&["generate", "d-linear", "--n", "50", "--seed", "3", "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.exists() && dir.path().join("nested/d.truth.csv").exists());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 51);
}

#[test]
fn generate_ihdp_and_env_default_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = surrogates(&["generate", "ihdp", "--n", "30"], Some(dir.path()));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let header = std::fs::read_to_string(dir.path().join("ihdp-seed0.csv")).unwrap();
    assert!(header.starts_with("IHDP_Number,Site_name,Treatment_group"));
}

#[test]
fn unknown_scenario_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = surrogates(&["generate", "z-linear", "--out", dir.path().join("x.csv").to_str().unwrap()], None);
    assert_eq!(code(&o), 2);
}

#[test]
fn run_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out_arg = out_dir.to_str().unwrap();

    // A failing method is an error row, not a failed run.
    let ok = dir.path().join("ok.json");
    write(
        &ok,
        r#"{"scenario": {"kind": "synthetic", "case_id": "a", "nonlinearity": "linear"},
            "methods": ["outcome_reg_lin", {"id": "bound_reg_lin", "options": {"scheme": "wminus"}}],
            "n_obs": 300, "n_trial": 200, "seeds": [0], "bootstrap": {"replicates": 0}}"#,
    );
    let o = surrogates(&["--out-dir", out_arg, "--format", "csv,json", "run", ok.to_str().unwrap()], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.contains(",error,InvalidOption,"));
    assert!(out_dir.join("results.json").exists());

    let bad = dir.path().join("bad.json");
    write(&bad, r#"{"scenario": {"kind": "synthetic", "case_id": "q"}, "methods": []}"#);
    assert_eq!(code(&surrogates(&["run", bad.to_str().unwrap()], None)), 2);

    let broken = dir.path().join("broken.json");
    write(&broken, "{ not json");
    assert_eq!(code(&surrogates(&["run", broken.to_str().unwrap()], None)), 2);

    let missing = dir.path().join("missing.json");
    assert_eq!(code(&surrogates(&["run", missing.to_str().unwrap()], None)), 3);

    // The output directory path is an existing regular file.
    let blocker = dir.path().join("blocker");
    write(&blocker, "");
    let o = surrogates(&["--out-dir", blocker.to_str().unwrap(), "run", ok.to_str().unwrap()], None);
    assert_eq!(code(&o), 3);
}

#[test]
fn oracle_check_passes_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = surrogates(&["--format", "json", "oracle-check", "--seed", "1", "--instances", "20"], Some(dir.path()));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("PASS")) && !stdout.contains("FAIL"));
    assert!(dir.path().join("oracle_check.json").exists());
}
