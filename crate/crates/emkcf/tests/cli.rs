use std::path::Path;
use std::process::{Command, Output};

fn emkcf(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emkcf")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_run_score() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&emkcf(&["synth", "--n", "120", "--c", "3", "--d", "4", "--sep", "8", "--seed", "2", "--out", "data"], d));
    ok(&emkcf(
        &["run", "--features", "data/features.csv", "--truth", "data/truth.csv", "--c", "3", "--k", "10", "--out", "out"],
        d,
    ));
    for f in ["report.json", "labels.csv", "convergence.csv"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("out/report.json")).unwrap()).unwrap();
    assert!(report["peak_allocation_bytes"].as_u64().unwrap() > 0);

    let out = emkcf(&["score", "--pred", "out/labels.csv", "--truth", "data/truth.csv"], d);
    ok(&out);
    let scores: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(scores["accuracy"], report["scores"]["accuracy"]);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&emkcf(&["synth", "--n", "90", "--c", "3", "--d", "3", "--format", "binary", "--out", "."], d));
    std::fs::write(d.join("run.json"), r#"{"features": "features.f64", "c": 3, "k": 12, "output": "a"}"#).unwrap();
    ok(&emkcf(&["run", "--config", "run.json", "--k", "6", "--max-iter", "3", "--mode", "argmax", "--out", "b"], d));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("b/report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["k"], 6);
    assert_eq!(report["config"]["mode"], "argmax");
    assert!(report["iterations"].as_u64().unwrap() <= 3);
}

#[test]
fn kernels_command_feeds_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&emkcf(&["synth", "--n", "80", "--c", "2", "--d", "3", "--out", "."], d));
    ok(&emkcf(&["kernels", "--features", "features.csv", "--k", "7", "--out", "k"], d));
    assert!(d.join("k/kernels.json").exists());
    assert!(d.join("k/kernel_12.kcs").exists());
    ok(&emkcf(
        &["run", "--kernel", "k/kernel_01.kcs", "--kernel", "k/kernel_12.kcs", "--truth", "truth.csv", "--c", "2", "--out", "out"],
        d,
    ));
}

#[test]
fn failures_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&emkcf(&["synth", "--n", "20", "--c", "2", "--d", "2", "--out", "."], d));
    let out = emkcf(&["run", "--features", "features.csv", "--c", "2", "--k", "25", "--out", "o"], d);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("kernel build stage") && err.contains("insufficient"), "{err}");

    let out = emkcf(&["run", "--features", "missing.csv", "--c", "2"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ingest stage"));
}
