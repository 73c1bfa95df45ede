use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_afriat"))
}

fn schema() -> jsonschema::JSONSchema {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../report.schema.json");
    let raw: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::JSONSchema::compile(&raw).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> (i32, Value, Output) {
    let out = bin().args(args).output().unwrap();
    let report = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out.status.code().unwrap(), report, out)
}

fn assert_valid(report: &Value) {
    let schema = schema();
    let msgs: Vec<String> = match schema.validate(report) {
        Ok(()) => return,
        Err(errors) => errors.map(|e| format!("{e} at {}", e.instance_path)).collect(),
    };
    panic!("report fails the schema: {msgs:?}\n{report:#}");
}

const FEASIBLE: &str = "p1,p2,q1,q2\n1,1,0.5,0.5\n2,1,0.25,0.5\n";
const INFEASIBLE: &str = "p1,p2,q1,q2\n1,1,0.25,0.5\n2,1,0.5,0.5\n";

#[test]
fn harp_feasible_pair() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "f.csv", FEASIBLE);
    let (code, report, _) = run(&["harp", "--input", input.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(report["status"], "FEASIBLE");
    let lambdas: Vec<f64> = serde_json::from_value(report["certificate"]["lambdas"].clone()).unwrap();
    assert!((lambdas.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(report["timings"].is_object());
    assert_valid(&report);
}

#[test]
fn harp_infeasible_pair_reports_the_cycle() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "i.csv", INFEASIBLE);
    let (code, report, _) = run(&["harp", "--input", input.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert_eq!(report["certificate"]["cycle"], serde_json::json!([1, 2]));
    let ratio = report["certificate"]["cycle_ratio"].as_f64().unwrap();
    assert!((ratio - 8.0 / 9.0).abs() < 1e-12);
    assert_valid(&report);
}

#[test]
fn missing_y_column_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "f.csv", "p1,p2,p3,q1,q2,q3\n1,1,1,1,1,1\n");
    let (code, _, out) = run(&["separability", "--input", input.to_str().unwrap(), "--y-cols", "3,4"]);
    assert_eq!(code, 10);
    assert!(String::from_utf8_lossy(&out.stderr).contains("y-cols"));
}

#[test]
fn usage_and_io_errors() {
    let (code, _, _) = run(&["harp"]);
    assert_eq!(code, 10);
    let (code, _, _) = run(&["frobnicate"]);
    assert_eq!(code, 10);
    let (code, _, _) = run(&["harp", "--input", "/nonexistent/data.csv"]);
    assert_eq!(code, 11);
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.csv", "p1,p2,q1,q2\n1,0,1,1\n");
    let (code, _, out) = run(&["harp", "--input", bad.to_str().unwrap()]);
    assert_eq!(code, 11);
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-positive"));
    let (code, _, _) = run(&["collective", "--input", bad.to_str().unwrap(), "--k", "0"]);
    assert_eq!(code, 10);
    let (code, _, _) = run(&["--help"]);
    assert_eq!(code, 0);
}

fn generate(dir: &TempDir, kind: &str, extra: &[&str]) -> (PathBuf, Value) {
    let out = dir.path().join(format!("{kind}.csv"));
    let mut args = vec!["gen", kind, "--output", out.to_str().unwrap(), "--no-timings"];
    args.extend_from_slice(extra);
    let (code, report, _) = run(&args);
    assert_eq!(code, 0);
    assert_valid(&report);
    (out, report)
}

#[test]
fn nested_data_round_trip() {
    let dir = TempDir::new().unwrap();
    let (data, truth) = generate(
        &dir,
        "nested",
        &["--goods", "2", "--y-goods", "2", "--periods", "6", "--seed", "3"],
    );
    assert_eq!(truth["witness"]["y_cols"], serde_json::json!([3, 4]));
    let dump = dir.path().join("program.txt");
    let (code, report, _) = run(&[
        "separability",
        "--input",
        data.to_str().unwrap(),
        "--y-cols",
        "3,4",
        "--dump-program",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{report:#}");
    assert_valid(&report);
    let text = std::fs::read_to_string(dump).unwrap();
    assert_eq!(text.lines().filter(|l| l.contains("subutility")).count(), 36);
}

#[test]
fn collective_and_class_number_reports() {
    let dir = TempDir::new().unwrap();
    let (data, truth) = generate(
        &dir,
        "collective",
        &["--goods", "2", "--periods", "3", "--seed", "7"],
    );
    assert_eq!(truth["witness"]["k"], 2);
    let path = data.to_str().unwrap();
    let (code, report, _) = run(&["collective", "--input", path, "--k", "2", "--no-timings"]);
    assert_eq!(code, 0, "{report:#}");
    assert_eq!(report["witness"]["k"], 2);
    assert_valid(&report);
    let (code, report, _) = run(&["class-number", "--input", path, "--no-timings"]);
    assert!(code == 0 || code == 2, "{report:#}");
    assert_valid(&report);
    let (code, report, _) = run(&["class-number", "--input", path, "--k-max", "1"]);
    if report["certificate"]["per_k"]["1"]["status"] == "INFEASIBLE" {
        assert_eq!(code, 3);
        assert_eq!(report["status"], "NOT_FOUND");
    }
    assert_valid(&report);
}

#[test]
fn reports_are_byte_identical_without_timings() {
    let dir = TempDir::new().unwrap();
    let (data, _) = generate(&dir, "collective", &["--goods", "2", "--periods", "4", "--seed", "11"]);
    let args = ["class-number", "--input", data.to_str().unwrap(), "--no-timings"];
    let a = bin().args(args).output().unwrap().stdout;
    let b = bin().args(args).output().unwrap().stdout;
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn report_file_output() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "f.csv", FEASIBLE);
    let out = dir.path().join("r.json");
    let (code, _, o) = run(&["harp", "--input", input.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(o.stdout.is_empty());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_valid(&report);
}

#[test]
fn generator_flags() {
    let dir = TempDir::new().unwrap();
    let (_, r) = generate(
        &dir,
        "cobb-douglas",
        &["--goods", "2", "--exponents", "0.3,0.7", "--budget-range", "0.5,2"],
    );
    assert_eq!(r["witness"]["exponents"], serde_json::json!([0.3, 0.7]));
    let out = dir.path().join("x.csv");
    let (code, _, _) = run(&["gen", "cobb-douglas", "--output", out.to_str().unwrap(), "--goods", "3", "--exponents", "0.5,0.5"]);
    assert_eq!(code, 10);
    let (_, r) = generate(&dir, "cobb-douglas", &["--noise", "0.2"]);
    assert_eq!(r["status"], "UNDECIDED");
}
