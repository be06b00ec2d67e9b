//! End-to-end CLI checks: subcommands, exit codes, and file outputs.

use std::path::PathBuf;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_grnn");

fn data_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data"))
}

#[test]
fn paramcount_prints_seven_rows_with_published_values() {
    let out = Command::new(BIN)
        .args(["paramcount", "50", "28"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 7);
    assert!(text.contains("mgu ") && text.contains("7900"));
    assert!(text.contains("6500") && text.contains("6450") && text.contains("4000"));
}

#[test]
fn gradcheck_passes_with_exit_zero() {
    let out = Command::new(BIN).arg("gradcheck").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows = text.lines().filter(|l| l.contains("max relative error")).count();
    assert_eq!(rows, 7);
    assert!(text.contains("gradient check passed"));
}

#[test]
fn usage_errors_exit_one() {
    let out = Command::new(BIN)
        .args(["train", "--cell", "mgu9", "--seq", "synthetic"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = Command::new(BIN).arg("nonsense").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_data_exits_two() {
    let out = Command::new(BIN)
        .args([
            "train",
            "--cell",
            "mgu",
            "--seq",
            "rows28",
            "--epochs",
            "1",
            "--data-dir",
            "/nonexistent-grnn-data",
        ])
        .env_remove("GRNN_DATA_DIR")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("error:"), "stderr: {err}");
}

#[test]
fn train_eval_round_trip_on_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("metrics.csv");
    let checkpoint = dir.path().join("model.grnn");
    let out = Command::new(BIN)
        .args([
            "train",
            "--cell",
            "mgu2",
            "--seq",
            "synthetic",
            "--epochs",
            "3",
            "--batch",
            "10",
            "--seed",
            "7",
            "--metrics",
            metrics.to_str().unwrap(),
            "--checkpoint",
            checkpoint.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(metrics.exists() && checkpoint.exists());

    let csv = std::fs::read_to_string(&metrics).unwrap();
    assert!(csv.starts_with("epoch,train_loss,train_acc,test_acc,seconds\n"));
    assert_eq!(csv.lines().count(), 4);

    let out = Command::new(BIN)
        .args([
            "eval",
            "--cell",
            "mgu2",
            "--seq",
            "synthetic",
            "--seed",
            "7",
            "--checkpoint",
            checkpoint.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("test accuracy:"), "stdout: {text}");

    // Evaluating under the wrong cell kind is a format error (exit 2).
    let out = Command::new(BIN)
        .args([
            "eval",
            "--cell",
            "mgu1",
            "--seq",
            "synthetic",
            "--seed",
            "7",
            "--checkpoint",
            checkpoint.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corrupted_checkpoint_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let checkpoint = dir.path().join("model.grnn");
    let status = Command::new(BIN)
        .args([
            "train",
            "--cell",
            "srnn",
            "--seq",
            "synthetic",
            "--epochs",
            "1",
            "--checkpoint",
            checkpoint.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let mut bytes = std::fs::read(&checkpoint).unwrap();
    bytes[0] = b'Z';
    std::fs::write(&checkpoint, bytes).unwrap();
    let out = Command::new(BIN)
        .args([
            "eval",
            "--cell",
            "srnn",
            "--seq",
            "synthetic",
            "--checkpoint",
            checkpoint.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mnist_eval_matches_train_output() {
    // One cheap epoch on a training subset, then eval must agree exactly
    // with the final reported test accuracy.
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("metrics.csv");
    let checkpoint = dir.path().join("model.grnn");
    let out = Command::new(BIN)
        .args([
            "train",
            "--cell",
            "mgu3",
            "--seq",
            "rows28",
            "--epochs",
            "1",
            "--train-limit",
            "300",
            "--seed",
            "3",
            "--data-dir",
            data_dir().to_str().unwrap(),
            "--metrics",
            metrics.to_str().unwrap(),
            "--checkpoint",
            checkpoint.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(&metrics).unwrap();
    let last = csv.lines().last().unwrap();
    let test_acc: f64 = last.split(',').nth(3).unwrap().parse().unwrap();

    let out = Command::new(BIN)
        .args([
            "eval",
            "--cell",
            "mgu3",
            "--seq",
            "rows28",
            "--data-dir",
            data_dir().to_str().unwrap(),
            "--checkpoint",
            checkpoint.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let reported: f64 = text
        .trim()
        .rsplit(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((reported - test_acc).abs() < 5e-5, "{reported} vs {test_acc}");
}
