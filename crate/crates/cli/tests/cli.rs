use std::path::{Path, PathBuf};
use std::process::Command;

use matsketch::io::{write_binary, write_csv};
use matsketch::report::{ExperimentReport, SCHEMA_VERSION};
use matsketch::DenseMatrix;
use matsketch_cli::{run, EXIT_DATA, EXIT_NOINPUT, EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, THREADS_ENV};
use serde_json::Value;

fn exe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_matsketch"))
}

/// Runs in-process, writing the report into `dir`.
fn run_with_report(dir: &Path, args: &[&str]) -> (i32, PathBuf) {
    let out = dir.join("report.json");
    let _ = std::fs::remove_file(&out);
    let mut argv = vec!["matsketch"];
    argv.extend_from_slice(args);
    argv.extend_from_slice(&["--out", out.to_str().unwrap()]);
    (run(&argv), out)
}

fn schema() -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/report.schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn rank5_defaults_satisfy_the_guarantee() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = run_with_report(dir.path(), &["approx-svd", "--witness", "rank5"]);
    assert_eq!(code, EXIT_OK);
    let r = ExperimentReport::read(&out).unwrap();
    assert_eq!(r.per_trial[0]["satisfied"], Value::Bool(true));
    assert_eq!(r.config["k"], 5);
}

#[test]
fn strict_block_identity_with_one_sample_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = run_with_report(dir.path(), &["approx-svd", "--witness", "block-identity", "--d", "1", "--strict"]);
    assert_eq!(code, EXIT_VIOLATION);
    let r = ExperimentReport::read(&out).unwrap();
    assert_eq!(r.per_trial[0]["satisfied"], Value::Bool(false));
    let (code, _) = run_with_report(dir.path(), &["approx-svd", "--witness", "block-identity", "--d", "1"]);
    assert_eq!(code, EXIT_OK);
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(run(["matsketch", "approx-svd", "--k", "3"]), EXIT_USAGE);
    assert_eq!(run(["matsketch", "approx-svd", "--witness", "rank5", "--epsilon", "1.5"]), EXIT_USAGE);
    assert_eq!(run(["matsketch", "decay", "--norm", "cut", "--q", "3"]), EXIT_USAGE);
    assert_eq!(run(["matsketch", "lln", "--ensemble", "matrix-rows"]), EXIT_USAGE);
    assert_eq!(run(["matsketch", "optimality", "--n", "5", "--m", "12", "--d", "3"]), EXIT_USAGE);
    assert_eq!(run(["matsketch", "frobnicate"]), EXIT_USAGE);
    assert_eq!(run(["matsketch", "--help"]), EXIT_OK);
}

#[test]
fn data_errors_exit_65() {
    let dir = tempfile::tempdir().unwrap();
    let big = dir.path().join("big.csv");
    write_csv(&big, &DenseMatrix::identity(32)).unwrap();
    let (code, _) = run_with_report(dir.path(), &["decay", "--norm", "cut", "--input", big.to_str().unwrap(), "--q", "8"]);
    assert_eq!(code, EXIT_DATA);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2\n3\n").unwrap();
    let (code, _) = run_with_report(dir.path(), &["approx-svd", "--input", bad.to_str().unwrap()]);
    assert_eq!(code, EXIT_DATA);
    let missing = dir.path().join("missing.csv");
    let (code, _) = run_with_report(dir.path(), &["approx-svd", "--input", missing.to_str().unwrap()]);
    assert_eq!(code, EXIT_NOINPUT);
}

#[test]
fn binary_honours_exit_codes_and_thread_variable() {
    let status = exe().args(["approx-svd", "--k", "2"]).status().unwrap();
    assert_eq!(status.code(), Some(EXIT_USAGE));
    let status = exe().env(THREADS_ENV, "zero").args(["lln", "--ensemble", "scaled-basis"]).status().unwrap();
    assert_eq!(status.code(), Some(EXIT_USAGE));
    let out = exe().env(THREADS_ENV, "2").args(["lln", "--ensemble", "scaled-basis", "--n", "4"]).output().unwrap();
    assert!(out.status.success());
    let report: ExperimentReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.command, "lln");
}

#[test]
fn cut_decay_identity_mean_near_q() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = run_with_report(dir.path(), &["decay", "--norm", "cut", "--witness", "identity", "--q", "8"]);
    assert_eq!(code, EXIT_OK);
    let mean = ExperimentReport::read(&out).unwrap().summary["value"].mean;
    assert!((mean - 8.0).abs() <= 0.8, "{mean}");
}

#[test]
fn spectral_decay_identity_matches_formula() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["decay", "--norm", "spectral", "--witness", "identity", "--n", "16", "--q", "2", "--trials", "4000"];
    let (code, out) = run_with_report(dir.path(), &args);
    assert_eq!(code, EXIT_OK);
    let mean = ExperimentReport::read(&out).unwrap().summary["value"].mean;
    let p = 1.0 - (1.0 - 2.0 / 16.0f64).powi(16);
    let se = (p * (1.0 - p) / 4000.0).sqrt();
    assert!((mean - p).abs() <= 3.0 * se, "{mean} vs {p}");
}

#[test]
fn lln_single_atom_has_no_deviation() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = run_with_report(dir.path(), &["lln", "--ensemble", "scaled-basis", "--n", "1"]);
    assert_eq!(code, EXIT_OK);
    let r = ExperimentReport::read(&out).unwrap();
    assert!(r.per_trial.iter().all(|t| t["deviation"] == 0.0));
}

#[test]
fn repeated_runs_share_digests() {
    let dir = tempfile::tempdir().unwrap();
    let digest = || {
        let (code, out) = run_with_report(dir.path(), &["lln", "--ensemble", "scaled-basis", "--n", "8", "--seed", "11"]);
        assert_eq!(code, EXIT_OK);
        ExperimentReport::read(&out).unwrap().without_timestamps()
    };
    assert_eq!(digest(), digest());
}

#[test]
fn optimality_report_fractions() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = run_with_report(dir.path(), &["optimality", "--n", "64", "--m", "256", "--d", "26"]);
    assert_eq!(code, EXIT_OK);
    let r = ExperimentReport::read(&out).unwrap();
    assert!(r.result["missed_block_fraction"].as_f64().unwrap() >= 0.99);
    assert_eq!(r.per_trial.len(), 200);
}

#[test]
fn streamed_file_reports_match_in_memory() {
    let dir = tempfile::tempdir().unwrap();
    let a = DenseMatrix::from_fn(60, 7, |i, j| ((i * 7 + j * j) as f64 * 0.37).sin() + (i == j) as u8 as f64);
    let bin = dir.path().join("a.bin");
    write_binary(&bin, &a).unwrap();
    let report = |stream: &str| {
        let args = ["approx-svd", "--input", bin.to_str().unwrap(), "--k", "3", "--d", "25", "--stream", stream];
        let (code, out) = run_with_report(dir.path(), &args);
        assert_eq!(code, EXIT_OK);
        ExperimentReport::read(&out).unwrap()
    };
    let memory = report("none");
    let two = report("two-pass");
    let one = report("one-pass");
    for key in ["projector_rank", "d"] {
        assert_eq!(memory.per_trial[0][key], two.per_trial[0][key], "{key}");
    }
    let field = |r: &ExperimentReport, key: &str| r.per_trial[0][key].as_f64().unwrap();
    assert!((field(&memory, "frobenius_norm") - field(&two, "frobenius_norm")).abs() <= 1e-12);
    // Two-pass errors come from AᵀA, accurate to about √ε·‖A‖₂.
    let tol = 1e-6 * field(&memory, "spectral_norm");
    assert!((field(&memory, "error_spectral") - field(&two, "error_spectral")).abs() <= tol);
    assert!(field(&memory, "sigma_kplus1") > 1e-3);
    assert_eq!(one.per_trial[0]["error_spectral"], Value::Null);
    assert!(memory.provenance.input_digest.as_ref().is_some_and(|d| d.len() == 64));
}

#[test]
fn reports_validate_against_schema() {
    let schema = schema();
    assert_eq!(schema["properties"]["schema_version"]["const"], SCHEMA_VERSION);
    let validator = jsonschema::validator_for(&schema).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("m.csv");
    std::fs::write(&csv, "1,0\n0,1\n").unwrap();
    let runs: [&[&str]; 5] = [
        &["approx-svd", "--witness", "rank5", "--trials", "2"],
        &["approx-svd", "--input", csv.to_str().unwrap(), "--k", "1", "--d", "4", "--stream", "one-pass"],
        &["decay", "--norm", "spectral", "--witness", "block-identity", "--n", "4", "--q", "6", "--trials", "20"],
        &["lln", "--ensemble", "matrix-rows", "--input", csv.to_str().unwrap(), "--trials", "3"],
        &["optimality", "--n", "4", "--m", "8", "--d", "3", "--trials", "5"],
    ];
    for args in runs {
        let (code, out) = run_with_report(dir.path(), args);
        assert_eq!(code, EXIT_OK, "{args:?}");
        let value: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&value).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{args:?}: {errors:?}");
        assert!(ExperimentReport::read(&out).unwrap().summary_discrepancy() <= 1e-12);
    }
}
