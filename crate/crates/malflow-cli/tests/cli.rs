//! End-to-end tests of the `malflow` binary: output contracts, exit codes,
//! configuration handling and reproducibility across reruns.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::tempdir;

fn malflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_malflow"))
        .current_dir(dir)
        .env_remove("MALFLOW_THREADS")
        .args(args)
        .output()
        .expect("the malflow binary should be runnable")
}

fn malflow_with_threads(dir: &Path, threads: &str, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_malflow"))
        .current_dir(dir)
        .env("MALFLOW_THREADS", threads)
        .args(args)
        .output()
        .expect("the malflow binary should be runnable")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process should exit normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

#[test]
fn simulate_round_trips_through_its_manifest() {
    let dir = tempdir().unwrap();
    let out = malflow(
        dir.path(),
        &[
            "simulate",
            "--drift",
            "ou",
            "--drift-params",
            "theta=1.2",
            "--x0",
            "-0.5",
            "--paths",
            "3",
            "--steps",
            "16",
            "--seed",
            "77",
            "--noise-prefix",
            "noise-",
            "--out",
            "first.csv",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let csv = read(dir.path(), "first.csv");
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# malliavin-flow v"), "got {header}");
    assert!(header.contains("schema="), "got {header}");
    assert_eq!(lines.next().unwrap(), "path_index,t,x1");
    // Per-path noise dumps carry the same versioned header.
    for p in 0..3 {
        let noise = read(dir.path(), &format!("noise-{p}.csv"));
        assert!(noise.starts_with("# malliavin-flow v"));
    }

    // The manifest captures the full effective configuration, so replaying it
    // must reproduce the table byte for byte.
    let manifest: Value = serde_json::from_str(&read(dir.path(), "first.manifest.json")).unwrap();
    assert_eq!(manifest["tool"], "simulate");
    assert_eq!(manifest["master_seed"], 77);
    assert_eq!(manifest["config"]["mc"]["paths"], 3);

    let rerun = malflow(
        dir.path(),
        &["simulate", "--config", "first.manifest.json", "--out", "second.csv"],
    );
    assert_eq!(code(&rerun), 0, "stderr: {}", stderr(&rerun));
    assert_eq!(csv, read(dir.path(), "second.csv"));
}

#[test]
fn config_file_matches_flags_byte_for_byte() {
    let dir = tempdir().unwrap();
    let out = malflow(
        dir.path(),
        &[
            "simulate",
            "--drift",
            "ou",
            "--drift-params",
            "theta=0.7,dim=2",
            "--x0",
            "0.2,-0.3",
            "--paths",
            "2",
            "--steps",
            "12",
            "--seed",
            "41",
            "--out",
            "flags.csv",
            "--emit-config",
            "effective.toml",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let rerun = malflow(
        dir.path(),
        &["simulate", "--config", "effective.toml", "--out", "file.csv"],
    );
    assert_eq!(code(&rerun), 0, "stderr: {}", stderr(&rerun));
    assert_eq!(read(dir.path(), "flags.csv"), read(dir.path(), "file.csv"));
}

#[test]
fn config_for_another_subcommand_is_rejected() {
    let dir = tempdir().unwrap();
    fs::write(dir.path().join("other.toml"), "subcommand = \"flow\"\n").unwrap();
    let out = malflow(dir.path(), &["simulate", "--config", "other.toml"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("describes a 'flow' run"), "got {}", stderr(&out));
}

#[test]
fn density_reports_each_requested_method() {
    let dir = tempdir().unwrap();
    let out = malflow(
        dir.path(),
        &[
            "density",
            "--drift",
            "ou",
            "--drift-params",
            "theta=1",
            "--x0",
            "1",
            "--steps",
            "64",
            "--paths",
            "1500",
            "--method",
            "both",
            "--y",
            "-1:1:3",
            "--seed",
            "4",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let csv = read(dir.path(), "density.csv");
    let malliavin: Vec<&str> = csv.lines().filter(|l| l.contains(",malliavin,")).collect();
    let kde: Vec<&str> = csv.lines().filter(|l| l.contains(",kde,")).collect();
    assert_eq!(malliavin.len(), 3);
    assert_eq!(kde.len(), 3);
    // The integration-by-parts estimator reports a standard error; the kernel
    // baseline has none.
    for line in malliavin {
        assert!(!line.contains("NaN"), "got {line}");
    }
    for line in kde {
        assert!(line.contains("NaN"), "got {line}");
    }
}

#[test]
fn density_rejects_insufficient_drift_smoothness() {
    let dir = tempdir().unwrap();
    let out = malflow(dir.path(), &["density", "--drift", "relu", "--order", "1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("k >= 2"), "got {}", stderr(&out));
    // Validation failures must not leave partial outputs behind.
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn unknown_names_are_config_errors() {
    let dir = tempdir().unwrap();

    let drift = malflow(dir.path(), &["simulate", "--drift", "spiral"]);
    assert_eq!(code(&drift), 2);
    assert!(stderr(&drift).contains("zero, ou, relu, softplus, bump"));

    let suite = malflow(dir.path(), &["suite", "warp"]);
    assert_eq!(code(&suite), 2);
    let msg = stderr(&suite);
    assert!(msg.contains("smoke") && msg.contains("full"), "got {msg}");

    let refine = malflow(dir.path(), &["transport", "--refine", "1"]);
    assert_eq!(code(&refine), 2);
    assert!(stderr(&refine).contains("two refinement levels"));

    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn verify_shuffle_stays_within_its_budget() {
    let dir = tempdir().unwrap();
    let out = malflow(
        dir.path(),
        &["verify-shuffle", "--m", "2", "--n", "2", "--nsub", "1000"],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("[PASS] shuffle-identity"));

    let csv = read(dir.path(), "verify-shuffle.csv");
    let row = csv.lines().last().unwrap();
    let cells: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
    let (residual, budget) = (cells[4], cells[5]);
    assert!(residual.abs() <= budget, "residual {residual} vs budget {budget}");
}

#[test]
fn thread_cap_changes_results_not_at_all() {
    let dir = tempdir().unwrap();
    let args = [
        "verify-estimate",
        "--m",
        "2",
        "--paths",
        "2000",
        "--nsub",
        "64",
        "--seed",
        "12",
    ];

    let two = malflow_with_threads(dir.path(), "2", &args);
    assert_eq!(code(&two), 0, "stderr: {}", stderr(&two));
    let first = read(dir.path(), "verify-estimate.csv");

    let five = malflow_with_threads(dir.path(), "5", &args);
    assert_eq!(code(&five), 0, "stderr: {}", stderr(&five));
    assert_eq!(first, read(dir.path(), "verify-estimate.csv"));

    let bad = malflow_with_threads(dir.path(), "banana", &["simulate"]);
    assert_eq!(code(&bad), 2);
    assert!(stderr(&bad).contains("MALFLOW_THREADS"));
}

#[test]
fn failed_check_maps_to_exit_code_one() {
    let dir = tempdir().unwrap();
    // A seeded configuration whose kernel-smoothing gap deterministically
    // lands just outside the route tolerance: the run completes, the check
    // fails, and the process reports it through the exit code.
    let out = malflow(
        dir.path(),
        &[
            "lamperti",
            "--sigma",
            "const",
            "--sigma-params",
            "s0=1.5",
            "--b",
            "ou",
            "--b-params",
            "theta=0.8",
            "--check",
            "density",
            "--paths",
            "6000",
            "--steps",
            "128",
            "--seed",
            "3",
        ],
    );
    assert_eq!(code(&out), 1, "stdout: {}", stdout(&out));
    assert!(stdout(&out).contains("[FAIL] lamperti-density"));
    // The table and manifest are still written: a failed check is data.
    assert!(dir.path().join("lamperti.csv").exists());
    assert!(dir.path().join("lamperti.manifest.json").exists());
}

#[test]
fn json_format_is_schema_tagged() {
    let dir = tempdir().unwrap();
    let out = malflow(
        dir.path(),
        &[
            "density",
            "--drift",
            "zero",
            "--steps",
            "32",
            "--paths",
            "400",
            "--y",
            "-1:1:3",
            "--format",
            "json",
            "--out",
            "density.json",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let doc: Value = serde_json::from_str(&read(dir.path(), "density.json")).unwrap();
    assert!(doc["version"].is_string());
    assert_eq!(doc["schema"], 1);
    let columns = doc["columns"].as_array().unwrap();
    assert_eq!(columns[0], "y");
    for row in doc["rows"].as_array().unwrap() {
        assert_eq!(row.as_array().unwrap().len(), columns.len());
    }
}

#[test]
fn smoke_suite_reports_thirteen_criteria() {
    let dir = tempdir().unwrap();
    let out = malflow(dir.path(), &["suite", "smoke", "--out", "report.json"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("13 of 13"), "got {}", stdout(&out));

    let report: Value = serde_json::from_str(&read(dir.path(), "report.json")).unwrap();
    let checks = report["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 13);
    for (i, check) in checks.iter().enumerate() {
        assert_eq!(check["id"], i as u64 + 1);
        assert_eq!(check["pass"], true, "criterion {} failed", i + 1);
    }
    let wall = report["wall_ms"].as_u64().unwrap();
    assert!(wall < 60_000, "smoke battery took {wall} ms");
}

#[test]
fn remaining_subcommands_exit_zero() {
    let dir = tempdir().unwrap();

    let flow = malflow(
        dir.path(),
        &["flow", "--steps", "128", "--fd-check", "--picard-order", "6"],
    );
    assert_eq!(code(&flow), 0, "stderr: {}", stderr(&flow));
    assert!(stdout(&flow).contains("[PASS] jacobian-fd"));

    let malliavin = malflow(
        dir.path(),
        &[
            "malliavin",
            "--steps",
            "64",
            "--order",
            "2",
            "--paths",
            "500",
            "--nondeg-p",
            "1,2",
        ],
    );
    assert_eq!(code(&malliavin), 0, "stderr: {}", stderr(&malliavin));
    assert!(stdout(&malliavin).contains("[PASS] nondegeneracy"));
    let header = read(dir.path(), "malliavin.csv");
    assert!(header.contains("D2_111"), "second order columns missing");

    let transport = malflow(
        dir.path(),
        &[
            "transport",
            "--steps",
            "128",
            "--x",
            "-2:2:21",
            "--residual",
            "both",
            "--refine",
            "3",
            "--seed",
            "9",
        ],
    );
    assert_eq!(code(&transport), 0, "stderr: {}", stderr(&transport));
    assert!(stdout(&transport).contains("[PASS] residual-decay"));

    let lamperti = malflow(
        dir.path(),
        &[
            "lamperti",
            "--check",
            "roundtrip",
            "--paths",
            "4000",
            "--steps",
            "128",
            "--seed",
            "3",
        ],
    );
    assert_eq!(code(&lamperti), 0, "stderr: {}", stderr(&lamperti));
    assert!(stdout(&lamperti).contains("[PASS] lamperti-roundtrip"));
}
