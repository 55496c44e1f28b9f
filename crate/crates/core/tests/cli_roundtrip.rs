use std::fs;

use serde_json::Value;

fn run(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("lindods").chain(args.iter().copied());
    let code = lindods::cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json(args: &[&str]) -> Value {
    let (code, out, err) = run(args);
    assert_eq!(code, 0, "{args:?}: {err}");
    serde_json::from_str(&out).unwrap()
}

fn round_trip(system: &[&str], extra: &[&str]) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("solution.json");
    let path = path.to_str().unwrap();
    let mut args = vec!["solve"];
    args.extend_from_slice(system);
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--format", "json", "--out", path]);
    let (code, _, err) = run(&args);
    assert_eq!(code, 0, "{err}");
    let solved: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();

    let mut args = vec!["verify"];
    args.extend_from_slice(system);
    args.extend_from_slice(&["--solution-file", path]);
    let checked = json(&args);
    let a = solved["max_residual"].as_f64().unwrap();
    let b = checked["max_residual"].as_f64().unwrap();
    assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
}

#[test]
fn solve_then_verify_file_reproduces_residual() {
    round_trip(
        &["--case", "A4_12", "--params", "C=1"],
        &["--phi", "(x+1)^2", "--x0", "0", "--intervals", "3"],
    );
}

#[test]
fn rk4_solution_file_reproduces_residual() {
    round_trip(
        &["--case", "A4_21", "--params", "C=0.5"],
        &["--phi", "sin(x)", "--x0", "1", "--intervals", "3", "--scheme", "rk4", "--steps", "32"],
    );
}

#[test]
fn spec_file_system_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("system.dods");
    fs::write(&spec, "rhs.kind = linear\nalpha = \"cos(x)\"\nbeta = \"1\"\ndelay = constant(1)\n").unwrap();
    let spec = spec.to_str().unwrap().to_string();
    round_trip(&["--spec", &spec], &["--phi", "x", "--x0", "0", "--intervals", "2"]);
}

#[test]
fn reduce_output_verifies_through_cli() {
    let reduced = json(&["reduce", "--case", "A3_5", "--params", "C1=1", "--params", "C2=1"]);
    assert_eq!(reduced["status"], "solved");
    let y = reduced["y"].as_str().unwrap();
    let checked = json(&["verify", "--case", "A3_5", "--params", "C1=1", "--params", "C2=1", "--solution", y]);
    assert_eq!(checked["passes"], true);
    assert!(checked["max_residual"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn bad_input_reports_error_without_panicking() {
    let (code, _, err) = run(&["solve", "--case", "A4_1", "--phi", "x", "--x0", "0", "--intervals", "1"]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error: "), "{err}");
    let (code, _, _) = run(&["roots", "--C", "abc"]);
    assert_eq!(code, 2);
}
