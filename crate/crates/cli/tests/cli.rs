use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meixner"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

fn assert_schema(name: &str, instance: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(format!("{name}.schema.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}\n{instance:#}");
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn classify_canonical_file() {
    let input = data("canonical_a05.json");
    let out = run(&["classify", "--input", path_str(&input)]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_schema("classify", &v);
    assert_eq!(v["variant"], "CaseI");
    assert!((v["a"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn classify_diagonal_and_rejected() {
    let out = run(&["classify", "--input", path_str(&data("diagonal.json"))]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_schema("classify", &v);
    assert_eq!(v["variant"], "CaseII");

    let out = run(&["classify", "--input", path_str(&data("tampered.json"))]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert_schema("classify", &v);
    assert_eq!(v["variant"], "Rejected");
}

#[test]
fn verify_canonical_quick() {
    let out = run(&["verify", "--a", "0.5", "--profile", "quick"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_schema("verify", &v);
    assert_eq!(v["passed"], true);
}

#[test]
fn verify_report_is_reproducible_and_written_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.json");
    let second = dir.path().join("second.json");
    for path in [&first, &second] {
        let out = run(&["verify", "--a", "0.9", "--seed", "7", "--out", path_str(path)]);
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
    }
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
}

#[test]
fn verify_tampered_file_fails_with_check_failure() {
    let out = run(&["verify", "--input", path_str(&data("tampered.json"))]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert_schema("verify", &v);
    assert_eq!(v["passed"], false);
}

#[test]
fn conflicting_entries_exit_three() {
    let out = run(&["moments", "--input", path_str(&data("bad.json")), "--max-degree", "2"]);
    assert_eq!(out.status.code(), Some(3));
    let e = stderr_json(&out);
    assert_schema("error", &e);
    assert_eq!(e["error"], "ConflictingEntry");
    assert!(out.stdout.is_empty());
}

#[test]
fn usage_errors_exit_two() {
    let input = data("canonical_a05.json");
    for args in [
        vec!["verify", "--a", "0.5", "--input", path_str(&input)],
        vec!["verify"],
        vec!["sample", "--a", "0.5", "--case2", "0,0,0"],
        vec!["laplace", "--a", "0.5", "--at", "1,2"],
        vec!["frobnicate"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_schema("error", &stderr_json(&out));
    }
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"alpha\""));
}

#[test]
fn input_errors_exit_three() {
    let out = run(&["classify", "--input", "/nonexistent/tensor.json"]);
    assert_eq!(out.status.code(), Some(3));
    let out = run(&["laplace", "--a", "1.5", "--at", "0,0,0"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "InvalidParam");
}

#[test]
fn validate_reports_obstructions() {
    let out = run(&["validate", "--input", path_str(&data("canonical_a05.json"))]);
    assert_eq!(out.status.code(), Some(0));
    assert_schema("validate", &stdout_json(&out));

    let out = run(&["validate", "--input", path_str(&data("tampered.json"))]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert_schema("validate", &v);
    // -a^2 (b - a) with a = 0.5, b = 1
    let entry = v["obstructions"]["entries"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["n"] == 1 && e["max_coefficient"].as_f64().unwrap() > 0.0)
        .expect("a nonzero n = 1 identity");
    assert!((entry["max_coefficient"].as_f64().unwrap() - 0.125).abs() < 1e-12);
}

#[test]
fn moments_rows() {
    let input = data("canonical_a05.json");
    let out = run(&["moments", "--input", path_str(&input), "--index", "0,0,3", "--mode", "exact"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_schema("moments", &v);
    assert_eq!(v[0]["value"], 1.0);
    assert_eq!(v[0]["exact"], "1");

    let out = run(&["moments", "--input", path_str(&input), "--max-degree", "3", "--format", "jsonl"]);
    assert_eq!(out.status.code(), Some(0));
    let rows: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 20);
    for row in &rows {
        assert_schema("moment_row", row);
    }

    let out = run(&["moments", "--input", path_str(&data("scaled.json")), "--index", "2,0"]);
    assert_eq!(out.status.code(), Some(0));
    assert!((stdout_json(&out)[0]["value"].as_f64().unwrap() - 2.0).abs() < 1e-12);

    let out = run(&["moments", "--input", path_str(&input), "--index", "1,1"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn laplace_value_and_domain_flag() {
    let out = run(&["laplace", "--a", "0.5", "--at", "0,0,0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_schema("laplace", &v);
    let expected = (-1.0f64).exp() * 0.75f64.powi(-4);
    assert!((v["value"].as_f64().unwrap() - expected).abs() < 1e-14);
    assert_eq!(v["in_domain"], true);

    let out = run(&["laplace", "--a", "0.5", "--at", "0,0,-3"]);
    let v = stdout_json(&out);
    assert_eq!(v["in_domain"], true);
    let out = run(&["laplace", "--a", "0.5", "--at", "0,0,3"]);
    let v = stdout_json(&out);
    assert_schema("laplace", &v);
    assert_eq!(v["in_domain"], false);
    assert!(v["value"].is_null());
}

#[test]
fn sample_streams_reproducibly() {
    let args = ["sample", "--a", "0.5", "--n", "70000", "--seed", "3"];
    let first = run(&args);
    let second = run(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 70000);
    assert_schema("sample_row", &serde_json::from_str(lines[69999]).unwrap());

    let out = run(&["sample", "--case2", "0.5,0,-0.5", "--n", "5", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x0,x1,x2"));
    assert_eq!(lines.count(), 5);

    let out = run(&["sample", "--a", "1", "--n", "10"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn oracle_checks() {
    let input = data("canonical_a05.json");
    for (check, mode) in [("axioms", "float"), ("meixner1", "exact"), ("meixner2", "float")] {
        let out = run(&[
            "oracle", "--input", path_str(&input), "--degree", "3", "--mode", mode, "--check", check,
        ]);
        assert_eq!(out.status.code(), Some(0), "{check}");
        let v = stdout_json(&out);
        assert_schema("oracle", &v);
        assert_eq!(v["passed"], true);
    }
    let out = run(&["oracle", "--input", path_str(&data("tampered.json")), "--degree", "3", "--check", "meixner1"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn tensor_fixtures_match_input_schema() {
    for name in ["canonical_a05.json", "bad.json", "tampered.json", "diagonal.json", "scaled.json"] {
        let v: Value = serde_json::from_str(&std::fs::read_to_string(data(name)).unwrap()).unwrap();
        assert_schema("tensor", &v);
    }
}
