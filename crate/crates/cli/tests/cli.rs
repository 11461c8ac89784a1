use std::fs;
use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;

fn tcn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn tcn")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn ok(args: &[&str]) -> String {
    let o = tcn(args);
    assert_eq!(code(&o), 0, "{args:?}\nstderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Train the default blob teacher into `<root>/teacher`.
fn teacher(root: &Path) -> PathBuf {
    let dir = root.join("teacher");
    ok(&["train-teacher", "--out", s(&dir)]);
    dir.join("teacher.tcn")
}

fn distill(root: &Path, teacher: &Path, n: usize, mode: &str) -> PathBuf {
    let dir = root.join(format!("{mode}{n}"));
    ok(&["distill", "--teacher", s(teacher), "--students", &n.to_string(), "--mode", mode, "--out", s(&dir)]);
    dir
}

struct Worker {
    child: Child,
    addr: String,
}

fn spawn_worker() -> Worker {
    let mut child = Command::new(env!("CARGO_BIN_EXE_tcn"))
        .args(["worker", "--listen", "127.0.0.1:0"])
        .env("RUST_LOG", "warn")
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect(&line).to_string();
    Worker { child, addr }
}

#[test]
fn teacher_metrics_and_determinism() {
    let root = tempfile::tempdir().unwrap();
    let t = teacher(root.path());
    let m = json(&root.path().join("teacher/teacher_metrics.json"));
    for key in ["train_acc", "test_acc", "params", "flops", "wall_time"] {
        assert!(m.get(key).is_some(), "missing {key}");
    }
    assert!(m["test_acc"].as_f64().unwrap() >= 0.95, "{m}");
    let again = root.path().join("again");
    ok(&["train-teacher", "--out", s(&again)]);
    assert_eq!(fs::read(&t).unwrap(), fs::read(again.join("teacher.tcn")).unwrap());
    let other = root.path().join("other");
    ok(&["train-teacher", "--out", s(&other), "--seed", "1"]);
    assert_ne!(fs::read(&t).unwrap(), fs::read(other.join("teacher.tcn")).unwrap());
    let echoed = json(&root.path().join("teacher/train-teacher.config.json"));
    assert_eq!(echoed["seed"], 0);
}

#[test]
fn config_file_and_flag_override() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("run.json");
    fs::write(&cfg, r#"{"seed": 3, "teacher": {"hidden": [16], "train": {"epochs": 2}}}"#).unwrap();
    let out = root.path().join("t");
    ok(&["train-teacher", "--config", s(&cfg), "--seed", "5", "--out", s(&out)]);
    let echoed = json(&out.join("train-teacher.config.json"));
    assert_eq!(echoed["seed"], 5);
    assert_eq!(echoed["teacher"]["train"]["seed"], 5);
    assert_eq!(echoed["teacher"]["train"]["epochs"], 2);
    assert_eq!(json(&out.join("teacher_metrics.json"))["layers"], serde_json::json!([16, 16, 32, 4]));
}

#[test]
fn usage_errors_exit_2() {
    let root = tempfile::tempdir().unwrap();
    let missing = root.path().join("nope.json");
    assert_eq!(code(&tcn(&["train-teacher", "--config", s(&missing)])), 2);
    let bad = root.path().join("bad.json");
    fs::write(&bad, r#"{"teachr": {}}"#).unwrap();
    assert_eq!(code(&tcn(&["train-teacher", "--config", s(&bad)])), 2);
    assert_eq!(code(&tcn(&["train-teacher", "--no-such-flag"])), 2);
    assert_eq!(code(&tcn(&["no-such-command"])), 2);
    assert_eq!(code(&tcn(&["distill", "--out", s(root.path())])), 2, "missing teacher");
    assert_eq!(code(&tcn(&["train-teacher", "--jobs", "0", "--out", s(root.path())])), 2);
    let o = tcn(&["infer", "--out", s(root.path())]);
    assert_eq!(code(&o), 2, "no workers");
}

#[test]
fn idx_source_without_files_exits_2() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("idx.json");
    fs::write(&cfg, r#"{"data": {"source": "idx", "idx_dir": "/nonexistent"}}"#).unwrap();
    let o = tcn(&["train-teacher", "--config", s(&cfg), "--out", s(root.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("IDX"));
}

#[test]
fn distill_outputs() {
    let root = tempfile::tempdir().unwrap();
    let t = teacher(root.path());
    let one = distill(root.path(), &t, 1, "ff");
    assert!(one.join("student_0.tcn").is_file() && !one.join("student_1.tcn").exists());

    let four = distill(root.path(), &t, 4, "ff");
    let csv = fs::read_to_string(four.join("distill_report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    let mut mses: Vec<String> = rows.iter().map(|r| r.split(',').nth(3).unwrap().to_string()).collect();
    mses.sort();
    mses.dedup();
    assert_eq!(mses.len(), 4, "{csv}");
    let report = json(&four.join("distill_report.json"));
    assert_eq!(report["n"], 4);
    assert!(report["per_student_test_mse"].is_array());
    let manifest = json(&four.join("ensemble.json"));
    assert_eq!(manifest["students"].as_array().unwrap().len(), 4);
    assert!(four.join("features_train.tct").is_file());

    // Same seed, same bytes.
    let again = root.path().join("again4");
    ok(&["distill", "--teacher", s(&t), "--students", "4", "--out", s(&again), "--jobs", "3"]);
    for k in 0..4 {
        let f = format!("student_{k}.tcn");
        assert_eq!(fs::read(four.join(&f)).unwrap(), fs::read(again.join(&f)).unwrap());
    }

    let o = tcn(&["distill", "--teacher", s(&t), "--students", "33", "--out", s(&root.path().join("x"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gan_mode_writes_reports() {
    let root = tempfile::tempdir().unwrap();
    let t = teacher(root.path());
    let dir = root.path().join("gan");
    ok(&["distill", "--teacher", s(&t), "--students", "2", "--mode", "gan", "--epochs", "5", "--out", s(&dir)]);
    for k in 0..2 {
        let csv = fs::read_to_string(dir.join(format!("gan_student_{k}.csv"))).unwrap();
        assert!(csv.starts_with("epoch,d_loss_real,d_loss_fake,g_bce,g_mse"));
        assert_eq!(csv.lines().count(), 6);
    }
    assert_eq!(json(&dir.join("distill_report.json"))["mode"], "gan");
}

#[test]
fn finetune_eval() {
    let root = tempfile::tempdir().unwrap();
    let t = teacher(root.path());
    let dir = distill(root.path(), &t, 4, "ff");
    ok(&["finetune-eval", "--out", s(&dir)]);
    let m = json(&dir.join("finetune_metrics.json"));
    let (a, b) = (m["acc_no_ft"].as_f64().unwrap(), m["acc_ft"].as_f64().unwrap());
    assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
    assert!(b >= a - 0.01, "{m}");

    fs::remove_file(dir.join("student_2.tcn")).unwrap();
    let o = tcn(&["finetune-eval", "--out", s(&dir)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("student 2"));
}

#[test]
fn distributed_inference_matches_local() {
    let root = tempfile::tempdir().unwrap();
    let t = teacher(root.path());
    let dir = distill(root.path(), &t, 2, "ff");
    let mut workers = [spawn_worker(), spawn_worker()];
    let addrs = format!("{},{}", workers[0].addr, workers[1].addr);
    let out = root.path().join("infer");
    let stdout = ok(&[
        "infer",
        "--workers",
        &addrs,
        "--ensemble",
        s(&dir.join("ensemble.json")),
        "--verify-local",
        "--ping",
        "100",
        "--shutdown",
        "--out",
        s(&out),
    ]);
    assert!(stdout.contains("bit-identical"), "{stdout}");
    assert_eq!(stdout.matches("rtt mean").count(), 2);
    assert!(stdout.contains("median") && stdout.contains("min"));
    let lat = json(&out.join("latency.json"));
    let req = &lat["requests"][0];
    assert!(req["end_to_end_s"].as_f64().unwrap() >= req["slowest_worker_s"].as_f64().unwrap());
    assert!(lat["mean_rtt_s"].as_f64().unwrap() > 0.0);
    assert_eq!(fs::read_to_string(out.join("predictions.txt")).unwrap().lines().count(), 256);
    for w in &mut workers {
        assert_eq!(w.child.wait().unwrap().code(), Some(0));
    }
}

#[test]
fn unreachable_worker_exits_3() {
    let root = tempfile::tempdir().unwrap();
    let addr = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().to_string();
    let o = tcn(&["infer", "--workers", &addr, "--ping", "3", "--timeout", "0.5", "--out", s(root.path())]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn report_rows_and_summary() {
    let root = tempfile::tempdir().unwrap();
    let t = teacher(root.path());
    let runs = root.path().join("runs");
    distill(&runs, &t, 1, "ff");
    distill(&runs, &t, 4, "ff");
    ok(&["report", s(&runs)]);
    let csv = fs::read_to_string(runs.join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "run,n,mode,params_total,params_per_student,flops,acc,total_mse,train_time");
    assert_eq!(lines.len(), 3);
    let per = |line: &str| line.split(',').nth(4).unwrap().parse::<f64>().unwrap();
    let (s1, s4) = (per(lines[1]), per(lines[2]));
    assert!((s4 - s1 / 4.0).abs() <= 0.2 * s1 / 4.0, "{csv}");
    let summary = fs::read_to_string(runs.join("summary.txt")).unwrap();
    assert_eq!(summary.matches("upgrade candidate").count(), 2);

    let empty = root.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(code(&tcn(&["report", s(&empty)])), 2);
}
