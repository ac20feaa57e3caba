//! End-to-end runs of the `glab` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn glab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glab")).args(args).current_dir(dir).env("GLAB_THREADS", "1").output().unwrap()
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn gibbs_run_writes_summary_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let o = glab(&["run", config("gibbs.toml").to_str().unwrap(), "--out", "g"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = tmp.path().join("g");
    let s = summary(&out);
    assert_eq!(s["pass"], true);
    for row in s["audits"].as_array().unwrap() {
        for key in ["name", "lhs", "rhs", "slack", "pass", "anchor"] {
            assert!(row.get(key).is_some(), "missing {key}");
        }
    }
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["threads"], 1);
    let files: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|f| f["file"].as_str().unwrap()).collect();
    assert!(files.contains(&"sites.csv") && files.contains(&"summary.json"));
    assert_eq!(m["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn invalid_configs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("connect.toml")).unwrap();
    for (name, bad) in [
        ("neg.toml", text.replace("r_1 = 1", "r_1 = -1")),
        ("unknown.toml", text.replace("seed = 1", "seed = 1\ncolour = \"red\"")),
        ("schema.toml", text.replace("schema = 1", "schema = 9")),
    ] {
        std::fs::write(tmp.path().join(name), bad).unwrap();
        let o = glab(&["run", name, "--out", "x"], tmp.path());
        assert_eq!(code(&o), 2, "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(code(&glab(&["run", "missing.toml"], tmp.path())), 2);
}

#[test]
fn csv_bodies_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    for d in ["a", "b"] {
        assert_eq!(code(&glab(&["run", config("cmi.toml").to_str().unwrap(), "--out", d], tmp.path())), 0);
    }
    let a = std::fs::read(tmp.path().join("a/cmi.csv")).unwrap();
    let b = std::fs::read(tmp.path().join("b/cmi.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert_eq!(std::fs::read(tmp.path().join("a/summary.json")).unwrap(), std::fs::read(tmp.path().join("b/summary.json")).unwrap());
}

#[test]
fn sweep_merges_runs_and_records_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("gibbs.toml");
    let o = glab(&["sweep", cfg.to_str().unwrap(), "--axis", "model.beta", "--values", "0.2", "0.5", "1", "--out", "s"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let body = std::fs::read_to_string(tmp.path().join("s/sweep.csv")).unwrap();
    assert_eq!(body.lines().count(), 4);
    assert!(body.lines().next().unwrap().starts_with("value,exit_code,energy"));
    let trends = std::fs::read_to_string(tmp.path().join("s/trends.csv")).unwrap();
    assert!(trends.contains("entropy_bits"));
    assert!(tmp.path().join("s/model.beta=0.5/summary.json").exists());

    let o = glab(&["sweep", cfg.to_str().unwrap(), "--axis", "model.n", "--values", "4", "-3", "--out", "t"], tmp.path());
    assert_eq!(code(&o), 2);
    let body = std::fs::read_to_string(tmp.path().join("t/sweep.csv")).unwrap();
    assert!(body.contains("\n4,0,") && body.contains("\n-3,2,"), "{body}");

    let o = glab(&["sweep", cfg.to_str().unwrap(), "--axis", "model.beta", "--values"], tmp.path());
    assert_eq!(code(&o), 0);
}

#[test]
fn quick_verify_subset() {
    let tmp = tempfile::tempdir().unwrap();
    let o = glab(&["verify-all", "--quick", "--only", "2,6,12", "--out", "v"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let body = std::fs::read_to_string(tmp.path().join("v/criteria.csv")).unwrap();
    assert_eq!(body.lines().count(), 4);
    assert!(body.lines().skip(1).all(|l| l.contains(",true,")));
    assert_eq!(code(&glab(&["verify-all", "--only", "13", "--out", "v"], tmp.path())), 2);
}

#[test]
fn connect_tfim_ledger() {
    let tmp = tempfile::tempdir().unwrap();
    let o = glab(&["run", config("connect.toml").to_str().unwrap(), "--out", "c"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ledger = std::fs::read_to_string(tmp.path().join("c/ledger.csv")).unwrap();
    assert!(ledger.starts_with("step,block,local_error,cumulative_bound,measured_global_error"));
    assert!(ledger.lines().count() > 2);
    let s = summary(&tmp.path().join("c"));
    assert_eq!(s["pass"], true);
    assert_eq!(s["metrics"]["path_steps"], 4.0);
}
