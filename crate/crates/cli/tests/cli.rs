use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = "n_examples = 30\nepochs = 1\nbatch_size = 8\ncheckpoint_every = 2\n";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latentqa"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn small_config(dir: &Path) {
    fs::write(dir.join("run.toml"), SMALL).unwrap();
}

#[test]
fn pipeline_writes_parseable_reports_under_out() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_config(dir);
    let base = ["--config", "run.toml", "--out", "o"];
    for cmd in ["synth", "train", "eval", "predict", "shortcuts"] {
        let mut args = vec![cmd];
        args.extend(base);
        ok(dir, &args);
    }
    ok(dir, &["eval", "--config", "run.toml", "--out", "o", "--independent-docs"]);

    let metrics: Value = serde_json::from_str(&fs::read_to_string(dir.join("o/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["overall"]["count"], 6);
    let indep: Value = serde_json::from_str(&fs::read_to_string(dir.join("o/metrics-independent.json")).unwrap()).unwrap();
    assert!(indep["overall"]["doc_f1"].is_number());
    let preds = fs::read_to_string(dir.join("o/predictions.jsonl")).unwrap();
    assert_eq!(preds.lines().count(), 6);
    for line in preds.lines() {
        let rec: Value = serde_json::from_str(line).unwrap();
        assert_eq!(rec["doc_set"].as_array().unwrap().len(), 2);
    }
    let history: Value = serde_json::from_str(&fs::read_to_string(dir.join("o/history.json")).unwrap()).unwrap();
    assert_eq!(history["steps"].as_array().unwrap().len(), 3);
    assert!(dir.join("o/best.ckpt").is_file());
    assert!(dir.join("o/checkpoints/step-000002.ckpt").is_file());
    assert!(dir.join("o/shortcuts.json").is_file());
    let summary = fs::read_to_string(dir.join("o/shortcuts.txt")).unwrap();
    assert!(summary.contains("inspected examples"));

    // nothing besides the config and the output directory
    let mut top: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    top.sort();
    assert_eq!(top, ["o", "run.toml"]);
}

#[test]
fn same_seed_gives_byte_identical_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_config(dir);
    for out in ["a", "b"] {
        for cmd in ["synth", "train", "eval"] {
            ok(dir, &[cmd, "--config", "run.toml", "--out", out, "--seed", "3"]);
        }
    }
    let a = fs::read(dir.join("a/metrics.json")).unwrap();
    let b = fs::read(dir.join("b/metrics.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn gradcheck_passes_on_the_tiny_instance() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gradcheck", "--out", "g", "--seed", "5"]);
    let report: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("g/gradcheck.json")).unwrap()).unwrap();
    assert!(report["max_rel_error"].as_f64().unwrap() < 1e-4);
    assert_eq!(report["arrays"].as_array().unwrap().len(), 7);
}

#[test]
fn unknown_config_key_is_fatal_and_named() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "lerning_rate = 0.1\n").unwrap();
    let out = run(tmp.path(), &["synth", "--config", "bad.toml", "--out", "o"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("lerning_rate"), "{}", stderr(&out));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn train_without_dataset_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["train", "--out", "o"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("train_path"), "{}", stderr(&out));
}

#[test]
fn eval_without_checkpoint_fails() {
    let tmp = tempfile::tempdir().unwrap();
    small_config(tmp.path());
    ok(tmp.path(), &["synth", "--config", "run.toml", "--out", "o"]);
    let out = run(tmp.path(), &["eval", "--config", "run.toml", "--out", "o"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("checkpoint"), "{}", stderr(&out));
}

#[test]
fn malformed_dataset_is_an_error_not_a_panic() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.json"), "{\"not\": \"a list\"}").unwrap();
    fs::write(tmp.path().join("run.toml"), "train_path = \"bad.json\"\ndev_path = \"bad.json\"\n").unwrap();
    let out = run(tmp.path(), &["train", "--config", "run.toml", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error:"), "{}", stderr(&out));
}

#[test]
fn invalid_flag_value_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["gradcheck", "--out", "o", "--k-doc", "0"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("k_doc"), "{}", stderr(&out));
}
