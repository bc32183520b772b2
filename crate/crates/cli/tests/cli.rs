use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn conseq(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conseq"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data").join(name)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn toy_surface_writes_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out = conseq(&["toy-surface", "--out", "res", "--seed", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let grid = std::fs::read_to_string(dir.path().join("res/surface_grid.csv")).unwrap();
    assert!(grid.starts_with("w1,w2,loss\n"));
    let trajs = std::fs::read_dir(dir.path().join("res"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("traj_"))
        .count();
    assert_eq!(trajs, 4);
}

#[test]
fn missing_config_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = conseq(&["train", "--config", "nowhere.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("nowhere.cfg"), "{}", stderr(&out));
}

#[test]
fn unknown_key_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "# toy\nseed = 1\nlearning_rate = 0.1\n").unwrap();
    let out = conseq(&["toy-surface", "--config", "run.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert!(msg.contains("line 3") && msg.contains("learning_rate"), "{msg}");
}

#[test]
fn conv_with_zero_lambda_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "images = {}\nlabels = {}\nlimit = 50\nconv = 2,3,3,2,0\narch = 338,10\nrule = c-sgd\nlambda = 0\n",
        fixture("fashion-1000-images-idx3-ubyte").display(),
        fixture("fashion-1000-labels-idx1-ubyte").display(),
    );
    std::fs::write(dir.path().join("run.cfg"), cfg).unwrap();
    let out = conseq(&["train", "--config", "run.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("lambda"), "{}", stderr(&out));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn train_writes_a_loss_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "images = {}\nlabels = {}\nlimit = 100\narch = 784,10\nrule = c-sgd\nmu = 0.1\nepochs = 1\nbatch_size = 20\n",
        fixture("fashion-1000-images-idx3-ubyte").display(),
        fixture("fashion-1000-labels-idx1-ubyte").display(),
    );
    std::fs::write(dir.path().join("run.cfg"), cfg).unwrap();
    let out = conseq(&["train", "--config", "run.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("out/train_c-sgd.csv")).unwrap();
    assert!(csv.starts_with("iteration,epoch,wall_ms,train_loss,train_acc\n"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&[][..], &["bogus"], &["train", "--seed", "x"], &["toy-paths", "--frobnicate"]] {
        let out = conseq(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn interference_without_a_batch_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = conseq(&["interference"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("batch_file"), "{}", stderr(&out));
}

#[test]
fn interference_prints_matrices() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("batch.txt"), "1 0\n0 1\n1 1\n").unwrap();
    std::fs::write(dir.path().join("run.cfg"), "batch_file = batch.txt\nlambda = 0.1\n").unwrap();
    let out = conseq(&["interference", "--config", "run.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["plain", "naive-normalized", "consequentialism"] {
        assert!(text.contains(name), "{text}");
    }
}
