use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn btd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_btd")).args(args).env_remove("BTD_RANK_TOL").output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn generate(dir: &Path, name: &str, extra: &[&str]) -> std::path::PathBuf {
    let prefix = dir.join(name);
    let mut args = vec!["generate", "--out", path_str(&prefix)];
    args.extend_from_slice(extra);
    let out = btd(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    prefix
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ["--dims", "3,8,8", "--sizes", "2,3,4", "--seed", "11", "--snr", "40"];
    let first = generate(dir.path(), "first", &spec);
    let second = generate(dir.path(), "second", &spec);
    for ext in ["btd", "json"] {
        let a = std::fs::read(first.with_extension(ext)).unwrap();
        let b = std::fs::read(second.with_extension(ext)).unwrap();
        assert_eq!(a, b, "{ext} differs");
    }
    let header = std::fs::read(first.with_extension("btd")).unwrap();
    assert!(header.starts_with(b"BTD1 R 3 8 8\n"));
}

#[test]
fn decompose_detects_terms_and_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = generate(dir.path(), "exact", &["--dims", "3,8,8", "--sizes", "2,3,4", "--seed", "3"]);
    let out = btd(&["decompose", path_str(&prefix.with_extension("btd"))]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["detected_r"], 3);
    assert_eq!(v["detected_l"], serde_json::json!([2, 3, 4]));
    assert_eq!(v["case"], 2);
    assert!(v["residual"].as_f64().unwrap() < 1e-10);
}

#[test]
fn decompose_complex_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let prefix =
        generate(dir.path(), "complex", &["--dims", "3,8,8", "--sizes", "2,3,4", "--seed", "4", "--field", "complex"]);
    let out = btd(&["decompose", path_str(&prefix.with_extension("btd"))]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["detected_l"], serde_json::json!([2, 3, 4]));
    assert_eq!(v["decomposition"]["field"], "complex");
}

#[test]
fn decompose_scenario_two_with_known_counts() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = generate(dir.path(), "noisy", &["--dims", "3,9,10", "--sizes", "1,2,3,4", "--seed", "7", "--snr", "50"]);
    let report = dir.path().join("report.json");
    let out = btd(&[
        "decompose",
        path_str(&prefix.with_extension("btd")),
        "--mode",
        "scenario2",
        "--known-r",
        "4",
        "--known-suml",
        "10",
        "--evd",
        "cpd",
        "--omega",
        "2",
        "--out",
        path_str(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["detected_r"], 4);
    assert_eq!(v["detected_l"], serde_json::json!([1, 2, 3, 4]));
}

#[test]
fn unreadable_or_invalid_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.btd");
    assert_eq!(btd(&["decompose", path_str(&missing)]).status.code(), Some(2));
    let junk = dir.path().join("junk.btd");
    std::fs::write(&junk, b"BTD1 R 1 1\n").unwrap();
    assert_eq!(btd(&["decompose", path_str(&junk)]).status.code(), Some(2));
    let bad_json = dir.path().join("bad.json");
    std::fs::write(&bad_json, b"{\"A\": 3}").unwrap();
    assert_eq!(btd(&["check", "--decomposition", path_str(&bad_json)]).status.code(), Some(2));
}

#[test]
fn solver_failure_exits_with_three_and_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = generate(dir.path(), "forced", &["--dims", "3,8,8", "--sizes", "2,3,4", "--seed", "3"]);
    let out = btd(&["decompose", path_str(&prefix.with_extension("btd")), "--case", "1"]);
    assert_eq!(out.status.code(), Some(3));
    let v = stdout_json(&out);
    assert!(v["error"].as_str().unwrap().contains("first case"));
}

#[test]
fn rank_tolerance_environment_variable_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = generate(dir.path(), "env", &["--dims", "3,8,8", "--sizes", "2,3,4"]);
    let out = Command::new(env!("CARGO_BIN_EXE_btd"))
        .args(["decompose", path_str(&prefix.with_extension("btd"))])
        .env("BTD_RANK_TOL", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_reports_generic_bounds_and_parameter_count() {
    let out = btd(&["check", "--dims", "8,8,50", "--sizes", "1x47,2", "--json"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    let generic = &v["generic"];
    assert_eq!(generic["bounds"]["row3"], false);
    assert_eq!(generic["bounds"]["row8"], true);
    assert_eq!(generic["parameter_count"]["passes"], true);
    assert!(v["instance"]["statements"].is_object());

    let few_terms = stdout_json(&btd(&["check", "--dims", "8,8,50", "--sizes", "1x7,2", "--json"]));
    assert_eq!(few_terms["generic"]["bounds"]["row3"], true);

    let tight = stdout_json(&btd(&["check", "--dims", "2,8,7", "--sizes", "3,3,3", "--json"]));
    assert_eq!(tight["generic"]["parameter_count"]["s"], 111);
    assert_eq!(tight["generic"]["parameter_count"]["ijk"], 112);
}

#[test]
fn check_with_finite_field_certification() {
    let out = btd(&["check", "--dims", "3,3,5", "--sizes", "1,1,1,2", "--gf", "--json"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["gf_q2_dim"]["verdict"]["kind"], "certified");
    let table = btd(&["check", "--dims", "3,3,5", "--sizes", "1,1,1,2", "--gf"]);
    let text = String::from_utf8(table.stdout).unwrap();
    assert!(text.contains("generic dim null Q2"));
    assert!(text.contains("parameter count"));
}

#[test]
fn check_accepts_a_decomposition_file() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = generate(dir.path(), "truth", &["--dims", "3,8,8", "--sizes", "2,3,4", "--seed", "9"]);
    let out = btd(&["check", "--decomposition", path_str(&prefix.with_extension("json")), "--json"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["instance"]["statements"]["s5_overall_unique"], true);
}

#[test]
fn experiment_writes_frequency_and_error_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("mc");
    let out = btd(&[
        "experiment",
        "--dims",
        "3,8,8",
        "--sizes",
        "2,3,4",
        "--snr",
        "40,inf",
        "--trials",
        "3",
        "--evd",
        "cpd",
        "--out-dir",
        path_str(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let freq = std::fs::read_to_string(out_dir.join("frequencies.csv")).unwrap();
    assert!(freq.starts_with("tuple,40,inf"));
    assert!(freq.contains("2 3 4,"));
    let errors = std::fs::read_to_string(out_dir.join("errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("rejected draws"));
}
