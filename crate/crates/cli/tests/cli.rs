use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use federank::data::synthetic::{generate, SyntheticSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_federank"))
}

fn write_dataset(dir: &Path) -> PathBuf {
    let spec = SyntheticSpec {
        n_users: 25,
        n_items: 50,
        min_profile: 20,
        mean_extra: 3.0,
        ..SyntheticSpec::default()
    };
    let mut s = String::new();
    for r in generate(&spec) {
        writeln!(s, "{}\t{}\t{}\t{}", r.user, r.item, r.rating, r.timestamp).unwrap();
    }
    let p = dir.join("ratings.tsv");
    std::fs::write(&p, s).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_a_complete_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_dataset(tmp.path());
    let out = tmp.path().join("run");
    let o = run(&[
        "run",
        "--dataset",
        data.to_str().unwrap(),
        "--epochs",
        "2",
        "--pi",
        "0.5",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "write_splits=true",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("federank P@10="));
    for f in ["config.txt", "metrics.csv", "items.csv", "users.csv", "telemetry_rounds.csv", "item_updates.csv", "split/stats.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let cfg = std::fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(cfg.contains("pi = 0.5"));
    assert!(cfg.contains("epochs = 2"));
}

#[test]
fn config_file_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_dataset(tmp.path());
    let cfg = tmp.path().join("exp.txt");
    std::fs::write(&cfg, format!("dataset = {}\nalgorithm = item_knn\nneighbors = 5\n", data.display())).unwrap();
    let out = tmp.path().join("knn");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(m.lines().nth(1).unwrap().starts_with("item_knn,ratings,,,"));
}

#[test]
fn sweep_search_audit_stats() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_dataset(tmp.path());
    let d = data.to_str().unwrap();
    let sweep_out = tmp.path().join("sweep");
    let o = run(&["sweep", "--dataset", d, "--epochs", "1", "--pi-grid", "0,1", "--t-modes", "per_user_avg", "--out", sweep_out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(sweep_out.join("pi_sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(sweep_out.join("updates_freq.csv").exists());
    assert!(sweep_out.join("rec_freq.csv").exists());

    let search_out = tmp.path().join("search");
    let o = run(&["search", "--dataset", d, "--algorithm", "bpr_mf", "--epochs", "1", "--alpha-grid", "0.01,0.1", "--out", search_out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("best learning_rate = "));

    let audit_out = tmp.path().join("audit");
    let o = run(&["audit", "--dataset", d, "--epochs", "1", "--pi-grid", "1", "--out", audit_out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(audit_out.join("audit.csv")).unwrap().starts_with("pi,rounds,"));

    let o = run(&["stats", "--dataset", d]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("users,items,positives"));
    assert!(stdout(&o).contains("\n25,"));
}

#[test]
fn missing_dataset_names_the_field() {
    let o = run(&["run"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("dataset"));
}

#[test]
fn unknown_algorithm_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_dataset(tmp.path());
    let o = run(&["run", "--dataset", data.to_str().unwrap(), "--algorithm", "svd", "--out", tmp.path().join("x").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("algorithm"));
}

#[test]
fn lists_algorithms() {
    let o = run(&["algorithms"]);
    let s = stdout(&o);
    for n in ["bpr_mf", "federank", "item_knn", "most_popular", "random", "user_knn"] {
        assert!(s.lines().any(|l| l == n), "{n}");
    }
}
