use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn dsq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsq")).args(args).output().expect("spawn dsq")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_run(out: &Path, extra: &[&str]) -> Output {
    let corpus = fixtures().join("corpus");
    let mut args = vec![
        "run",
        path(&corpus),
        "--unit",
        "csm",
        "--train-fraction",
        "0.5",
        "--epochs",
        "2",
        "--hidden",
        "8",
        "--out",
        path(out),
    ];
    args.extend_from_slice(extra);
    dsq(&args)
}

#[test]
fn ingest_counts_dialects_and_is_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = fixtures().join("corpus");
    let a = dsq(&["ingest", path(&corpus), "--out", path(&tmp.path().join("a"))]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let stdout = String::from_utf8(a.stdout).unwrap();
    assert!(stdout.contains("apktool\t2"));
    assert!(stdout.contains("ida\t1"));
    assert!(stdout.contains("jeb\t1"));
    assert!(stdout.contains("total\t4"));
    assert_eq!(fs::read_dir(tmp.path().join("a/docs")).unwrap().count(), 4);
    let b = dsq(&["ingest", path(&corpus), "--out", path(&tmp.path().join("b"))]);
    let digest = |o: &[u8]| String::from_utf8_lossy(o).lines().last().unwrap().to_string();
    assert_eq!(digest(&b.stdout), digest(stdout.as_bytes()));
}

#[test]
fn corrupt_manifest_exits_2_naming_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dsq(&["ingest", path(&fixtures().join("bad_manifest.tsv")), "--out", path(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn missing_input_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dsq(&["run", path(&tmp.path().join("absent.tsv")), "--out", path(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_flag_value_is_a_usage_error() {
    assert_eq!(dsq(&["run", "x", "--unit", "word"]).status.code(), Some(2));
    assert_eq!(dsq(&["run", "x", "--dialect", "radare"]).status.code(), Some(2));
}

#[test]
fn run_writes_artifacts_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = tiny_run(out, &["--seed", "7"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["config.json", "report.json", "report.csv", "model.dsqm", "vocab.tsv", "train.dsqe", "test.dsqe"] {
        assert!(a.join(f).is_file(), "{f}");
    }
    for f in ["report.json", "report.csv", "model.dsqm"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["dialect"], "mixed");
    assert_eq!(report["config"]["seq_len"], 2500);
    assert_eq!(report["config"]["seed"], 7);
    assert!(report["apps"]["table"]["fn"].is_u64());
}

#[test]
fn ism_default_length_and_override() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = fixtures().join("corpus");
    let base = ["run", path(&corpus), "--unit", "ism", "--train-fraction", "0.5", "--epochs", "1", "--hidden", "4"];
    for (extra, expect) in [(vec![], 15), (vec!["--seq-len", "6"], 6)] {
        let out = tmp.path().join(expect.to_string());
        let mut args = base.to_vec();
        args.extend(extra);
        args.extend(["--out", path(&out)]);
        assert!(dsq(&args).status.success());
        let r: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
        assert_eq!(r["config"]["seq_len"], expect);
    }
}

#[test]
fn replay_reproduces_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    assert!(tiny_run(&a, &[]).status.success());
    let b = tmp.path().join("b");
    let o = dsq(&["replay", path(&a.join("config.json")), "--out", path(&b)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "report.csv", "model.dsqm"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn segments_prints_json_lines() {
    let o = dsq(&["segments", path(&fixtures().join("corpus")), "--unit", "msm"]);
    assert!(o.status.success());
    let lines: Vec<serde_json::Value> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(!lines.is_empty());
    for v in &lines {
        assert_eq!(v["kind"], "msm");
        assert!(v["app_id"].is_string() && v["label"].is_string() && v["lines"].is_array());
    }
}

#[test]
fn unknown_experiment_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dsq(&["experiment", "depth", "--out", path(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
}

fn experiment(name: &str, out: &Path) -> serde_json::Value {
    let o = dsq(&["experiment", name, "--seed", "1", "--apps", "6", "--epochs", "1", "--out", path(out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn granularity_report_has_four_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let r = experiment("granularity", tmp.path());
    let kinds: Vec<&str> = r["rows"].as_array().unwrap().iter().map(|r| r["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["ism", "bsm", "msm", "csm"]);
    let csv = fs::read_to_string(tmp.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn path_token_report_has_two_arms() {
    let tmp = tempfile::tempdir().unwrap();
    let r = experiment("path-token", tmp.path());
    assert_eq!(r["with_paths"]["arm"], "with-path");
    assert_eq!(r["without_paths"]["arm"], "without-path");
    assert_eq!(r["with_paths"]["kind"], "msm");
}

#[test]
fn version_lists_formats() {
    let o = dsq(&["--version"]);
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.contains("DSQE v1") && s.contains("DSQM v1"));
}
