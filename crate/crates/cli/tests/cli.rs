//! End-to-end tests of the `netrdd` binary: ingestion and validation,
//! estimate/simulate report shape, determinism, and the export round trip.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_netrdd"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn basic_config(dir: &Path, extra_effects: &str) -> PathBuf {
    let path = dir.join("cfg.json");
    write(
        &path,
        &format!(
            r#"{{
  "cutoff": 0.0,
  "exposure": "one_treated",
  "schema": {{"id": "id", "score": "score", "outcome": "outcome", "cluster": "village"}},
  "effects": [{{"kind": "overall_direct", "h": 1.0}}{extra_effects}],
  "variance": ["network", "iid"]
}}"#
        ),
    );
    path
}

// Deterministic synthetic table: clusters of 3 with a mix of treatments.
fn synthetic_units(dir: &Path, n_clusters: usize) -> PathBuf {
    let path = dir.join("units.csv");
    let mut text = String::from("id,score,outcome,village\n");
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut unif = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for c in 0..n_clusters {
        for m in 0..3 {
            let x = 2.0 * unif() - 1.0;
            let d = (x >= 0.0) as u8 as f64;
            let y = 0.5 + 1.5 * d + 0.5 * x + unif();
            text.push_str(&format!("u{c}_{m},{x},{y},v{c}\n"));
        }
    }
    write(&path, &text);
    path
}

fn expect_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn expect_error_code(out: &Output, code: &str) {
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let payload: serde_json::Value =
        serde_json::from_str(stderr.lines().last().unwrap()).expect("machine-readable stderr");
    assert_eq!(payload["code"], code, "stderr: {stderr}");
}

#[test]
fn three_row_cluster_ingestion() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("units.csv");
    write(&data, "id,score,outcome,village\nu0,-1.0,0.1,a\nu1,0.5,1.4,a\nu2,0.7,2.0,b\n");
    let cfg = basic_config(dir.path(), "");
    let out = bin()
        .args(["diagnose", "--data"])
        .arg(&data)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    expect_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    // u0 and u1 pair up; u2 is isolated
    assert!(stdout.contains("rows: 3"));
    assert!(stdout.contains("isolated units (|S_i| = 0): 1"));
    assert!(stdout.contains("|S_i| histogram: 0:1 1:2"));
}

#[test]
fn dangling_edge_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_units(dir.path(), 4);
    let edges = dir.path().join("edges.txt");
    write(&edges, "u0_0 u0_1\nu1_0 nobody\n");
    let cfg = basic_config(dir.path(), "");
    let out = bin()
        .args(["diagnose", "--data"])
        .arg(&data)
        .arg("--edges")
        .arg(&edges)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    expect_error_code(&out, "E_SCHEMA");
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn unknown_kernel_rejected_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_units(dir.path(), 4);
    let cfg = basic_config(dir.path(), "");
    let out_path = dir.path().join("res");
    let out = bin()
        .args(["estimate", "--data"])
        .arg(&data)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_path)
        .args(["--kernel", "box"])
        .output()
        .unwrap();
    expect_error_code(&out, "E_CONFIG");
    // nothing partially written
    assert!(!out_path.with_extension("estimates.csv").exists());
}

#[test]
fn duplicate_id_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("units.csv");
    write(&data, "id,score,outcome,village\nu0,-1.0,0.1,a\nu0,0.5,1.4,a\n");
    let cfg = basic_config(dir.path(), "");
    let out = bin()
        .args(["diagnose", "--data"])
        .arg(&data)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    expect_error_code(&out, "E_SCHEMA");
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate id"));
}

#[test]
fn treatment_override_mismatch_aborts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("units.csv");
    write(
        &data,
        "id,score,outcome,village,d\nu0,-1.0,0.1,a,0\nu1,0.5,1.4,a,0\nu2,0.7,2.0,a,1\n",
    );
    let cfg = dir.path().join("cfg.json");
    write(
        &cfg,
        r#"{
  "cutoff": 0.0,
  "exposure": "one_treated",
  "schema": {"id": "id", "score": "score", "outcome": "outcome", "cluster": "village", "treatment": "d"},
  "effects": [{"kind": "overall_direct"}]
}"#,
    );
    let out = bin()
        .args(["diagnose", "--data"])
        .arg(&data)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    expect_error_code(&out, "E_SCHEMA");
    assert!(String::from_utf8_lossy(&out.stderr).contains("u1"));
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_units(dir.path(), 60);
    let cfg = basic_config(
        dir.path(),
        r#", {"kind": "boundary", "from": [0, "1"], "to": [0, "0"], "h": 1.0}"#,
    );
    let run = |name: &str| {
        let out_path = dir.path().join(name);
        let out = bin()
            .args(["estimate", "--data"])
            .arg(&data)
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out_path)
            .output()
            .unwrap();
        expect_success(&out);
        std::fs::read(out_path.with_extension("estimates.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn six_estimand_report_shape() {
    // the empirical-workflow shape: overall direct + indirect, two boundary
    // direct contrasts, two boundary indirect contrasts, all bias-corrected
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_units(dir.path(), 120);
    let cfg = dir.path().join("cfg.json");
    write(
        &cfg,
        r#"{
  "cutoff": 0.0,
  "exposure": "one_treated",
  "bias_correct": true,
  "schema": {"id": "id", "score": "score", "outcome": "outcome", "cluster": "village"},
  "effects": [
    {"kind": "overall_direct", "h": 0.8, "b": 1.0},
    {"kind": "overall_indirect", "h": 0.8, "b": 1.0},
    {"kind": "boundary", "from": [1, "0"], "to": [0, "0"], "h": 0.8, "b": 1.0},
    {"kind": "boundary", "from": [1, "1"], "to": [0, "1"], "h": 0.8, "b": 1.0},
    {"kind": "boundary", "from": [0, "1"], "to": [0, "0"], "h": 0.8, "b": 1.0},
    {"kind": "boundary", "from": [1, "1"], "to": [1, "0"], "h": 0.8, "b": 1.0}
  ],
  "variance": ["network", "iid", "cluster"]
}"#,
    );
    let out_path = dir.path().join("res");
    let out = bin()
        .args(["estimate", "--data"])
        .arg(&data)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    expect_success(&out);
    let csv = std::fs::read_to_string(out_path.with_extension("estimates.csv")).unwrap();
    let lines: Vec<&str> = csv.trim_end().lines().collect();
    assert_eq!(lines.len(), 1 + 12, "six conventional + six bc rows:\n{csv}");
    assert_eq!(lines.iter().filter(|l| l.contains(",conventional,")).count(), 6);
    assert_eq!(lines.iter().filter(|l| l.contains(",bias_corrected,")).count(), 6);
    // JSON mirror parses and has the six labels
    let json = std::fs::read_to_string(out_path.with_extension("estimates.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed.as_array().unwrap().len(), 6);
}

#[test]
fn max_neighbors_filter_reports_counts() {
    // clusters of sizes 1..10 give |S_i| in {0..9}; cap 4 keeps sizes <= 5
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("units.csv");
    let mut text = String::from("id,score,outcome,village\n");
    let mut unit = 0;
    for size in 1..=10usize {
        for _ in 0..size {
            let x = if unit % 2 == 0 { -0.5 } else { 0.5 };
            text.push_str(&format!("u{unit},{x},{},g{size}\n", 1.0 + x));
            unit += 1;
        }
    }
    write(&data, &text);
    let cfg = basic_config(dir.path(), "");
    let out = bin()
        .args(["diagnose", "--data"])
        .arg(&data)
        .arg("--config")
        .arg(&cfg)
        .args(["--max-neighbors", "4"])
        .output()
        .unwrap();
    expect_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("rows: 55"), "{stdout}");
    assert!(
        stdout.contains("max-neighbors filter (|S_i| <= 4): 55 -> 15"),
        "{stdout}"
    );
}

#[test]
fn export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_units(dir.path(), 40);
    let cfg = basic_config(dir.path(), "");
    let dump = dir.path().join("dump");
    let out = bin()
        .args(["diagnose", "--data"])
        .arg(&data)
        .arg("--config")
        .arg(&cfg)
        .arg("--export")
        .arg(&dump)
        .output()
        .unwrap();
    expect_success(&out);
    let exported = dump.with_extension("units.csv");
    // re-export from the exported file: fixpoint reached after one round
    let dump2 = dir.path().join("dump2");
    let out2 = bin()
        .args(["diagnose", "--data"])
        .arg(&exported)
        .arg("--config")
        .arg(&cfg)
        .arg("--export")
        .arg(&dump2)
        .output()
        .unwrap();
    expect_success(&out2);
    assert_eq!(
        std::fs::read(&exported).unwrap(),
        std::fs::read(dump2.with_extension("units.csv")).unwrap()
    );
    // and estimates computed from original vs exported data agree exactly
    let run = |path: &Path, name: &str| {
        let out_path = dir.path().join(name);
        let out = bin()
            .args(["estimate", "--data"])
            .arg(path)
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out_path)
            .output()
            .unwrap();
        expect_success(&out);
        std::fs::read(out_path.with_extension("estimates.csv")).unwrap()
    };
    assert_eq!(run(&data, "orig"), run(&exported, "reimported"));
}

#[test]
fn simulate_writes_table_layout_and_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out_path = dir.path().join(name);
        let out = bin()
            .args([
                "simulate",
                "--scenario",
                "cluster",
                "--n",
                "300",
                "--reps",
                "6",
                "--seed",
                "11",
                "--out",
            ])
            .arg(&out_path)
            .output()
            .unwrap();
        expect_success(&out);
        std::fs::read_to_string(out_path.with_extension("mc.csv")).unwrap()
    };
    let a = run("mc_a");
    let b = run("mc_b");
    assert_eq!(a, b);
    let lines: Vec<&str> = a.trim_end().lines().collect();
    assert_eq!(lines.len(), 1 + 3, "three estimand rows:\n{a}");
    assert!(lines[0].starts_with("scenario,n,reps,effect,estimator,truth,bias,sd"));
    for label in ["tau(1|0)", "tau(1,0|0,0)", "tau(0,1|0,0)"] {
        assert!(a.contains(label), "missing {label}");
    }
}

#[test]
fn simulate_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out_path = dir.path().join(name);
        let out = bin()
            .env("RAYON_NUM_THREADS", threads)
            .args([
                "simulate", "--scenario", "cluster", "--n", "300", "--reps", "6", "--seed",
                "21", "--out",
            ])
            .arg(&out_path)
            .output()
            .unwrap();
        expect_success(&out);
        std::fs::read(out_path.with_extension("mc.csv")).unwrap()
    };
    assert_eq!(run("w1", "1"), run("w4", "4"));
}

#[test]
fn simulate_single_rep_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("smoke");
    let out = bin()
        .args(["simulate", "--scenario", "varying", "--sizes", "3,4,5", "--n", "240", "--reps", "1", "--seed", "3", "--out"])
        .arg(&out_path)
        .output()
        .unwrap();
    expect_success(&out);
    assert!(out_path.with_extension("mc.csv").exists());
}
