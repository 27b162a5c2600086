//! End-to-end runs of the binary on small configurations.

use std::path::Path;
use std::process::Command;

use scream_bench::output::{parse_csv, RESULT_HEADER};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_scream-bench"));
    c.env("SCREAM_WORKERS", "2");
    c
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn oco_bench_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "horizon = 400\nchange_period = 100\nseeds = 1, 2\n");
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = bin()
            .args(["oco-bench", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(["--alpha", "0.5"])
            .output()
            .unwrap()
            .status;
        assert!(status.success());
        outputs.push(std::fs::read(out.join("results.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let rows = parse_csv(&dir.path().join("a/results.csv")).unwrap();
    assert_eq!(rows.len(), 3 * 2);
    for r in &rows {
        assert!((r.overall_loss - r.cumulative_loss - r.switching_cost).abs() <= 1e-6 * r.overall_loss.max(1.0));
        assert_eq!(r.wall_time_ms, 0);
    }
    let head = String::from_utf8(outputs[0].clone()).unwrap();
    assert_eq!(head.lines().next().unwrap(), RESULT_HEADER.join(","));
    assert!(dir.path().join("a/summary.csv").exists());
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "horizn = 10\n");
    let out = bin().args(["oco-bench", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizn"));
}

#[test]
fn control_and_sysid_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "horizon = 150\nh = 3\nfit_iterations = 30\n");
    let status = bin()
        .args(["control-bench", "--seed", "4", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let rows = parse_csv(&dir.path().join("control_results.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.algorithm.as_str()).collect::<Vec<_>>(), ["ogd-dac", "scream-control", "zero"]);

    let cfg = write_config(dir.path(), "explore_grid = 200, 800\nseeds = 1, 2, 3\n");
    let status = bin().args(["sysid-bench", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap().status;
    assert!(status.success());
    assert!(dir.path().join("sysid_summary.json").exists());
}

#[test]
fn verify_runs_a_single_check() {
    let out = bin().args(["verify", "--check", "2"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("[PASS] 2."), "{text}");
}
