//! Command-line behaviour: determinism, artifacts and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn abduction(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abduction"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn generate(out: &Path, train: usize, test: usize) -> Output {
    abduction(&[
        "generate",
        "--out",
        out.to_str().unwrap(),
        "--episodes",
        &train.to_string(),
        "--test-episodes",
        &test.to_string(),
    ])
}

#[test]
fn generate_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&generate(&a, 20, 5)), 0);
    assert_eq!(code(&generate(&b, 20, 5)), 0);
    for f in ["world.json", "vocab.json", "train.jsonl", "test.jsonl", "embeddings.jsonl", "oracle.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let stdout = String::from_utf8(generate(&b, 20, 5).stdout).unwrap();
    assert!(stdout.contains("oracle mAP"), "{stdout}");
}

#[test]
fn empty_dataset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = generate(dir.path(), 0, 5);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty dataset"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"world": {}, "lr": 1}"#).unwrap();
    let o = abduction(&["--config", cfg.to_str().unwrap(), "generate"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn train_then_eval_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let runs = dir.path().join("runs");
    assert_eq!(code(&generate(&data, 30, 8)), 0);
    let (d, r) = (data.to_str().unwrap(), runs.to_str().unwrap());

    let o = abduction(&["train", "--data", d, "--out", r, "--model", "mlp", "--epochs", "2", "--runs", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = runs.join("mlp/run0/checkpoint.bin");
    assert!(ckpt.exists());
    let curve = fs::read_to_string(runs.join("mlp/run0/metrics.jsonl")).unwrap();
    assert_eq!(curve.lines().count(), 2);

    let ck = ckpt.to_str().unwrap();
    let o = abduction(&["eval", "--data", d, "--out", r, "--checkpoint", ck, "--mode", "last"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(runs.join("eval/mlp_all_past_last.json")).unwrap()).unwrap();
    assert_eq!(report["n_examples"], 8, "one example per test video");

    let o = abduction(&["eval", "--data", d, "--out", r, "--baseline", "rule"]);
    assert_eq!(code(&o), 0);
    assert!(runs.join("eval/rule_all_past_all.json").exists());

    // A truncated checkpoint is a data error.
    let bytes = fs::read(&ckpt).unwrap();
    let broken = dir.path().join("broken.bin");
    fs::write(&broken, &bytes[..bytes.len() / 2]).unwrap();
    let o = abduction(&["eval", "--data", d, "--out", r, "--checkpoint", broken.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn rule_is_not_trainable() {
    let dir = tempfile::tempdir().unwrap();
    let o = abduction(&["train", "--out", dir.path().to_str().unwrap(), "--model", "rule"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_catches_an_injected_gradient_bug() {
    let clean = abduction(&["verify", "--only", "grad.op.jaccard_affinity"]);
    assert_eq!(code(&clean), 0);
    let faulty = abduction(&["verify", "--only", "grad.op.jaccard_affinity", "--inject-fault", "jaccard-sign"]);
    assert_eq!(code(&faulty), 5);
    assert!(String::from_utf8_lossy(&faulty.stdout).contains("FAIL grad.op.jaccard_affinity"));
}
