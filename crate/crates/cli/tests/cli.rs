use std::path::Path;
use std::process::{Command, Output};

const FAST: [&str; 4] = ["--periods", "2", "--steps-per-period", "200"];

fn qmemlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmemlab"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn qmemlab")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = qmemlab(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(qmemlab(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(qmemlab(dir.path(), &["dataset", "--n", "3"]).status.code(), Some(2));
    assert_eq!(qmemlab(dir.path(), &["--help"]).status.code(), Some(0));
    let missing = qmemlab(dir.path(), &["stats", "--data", "missing.csv"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error: "));
    let bad_trunc = qmemlab(dir.path(), &["--trunc", "9", "simulate", "--lambda", "1"]);
    assert_eq!(bad_trunc.status.code(), Some(1));
}

#[test]
fn simulate_writes_the_coupled_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = FAST.to_vec();
    args.extend(["simulate", "--lambda", "3", "--c12", "1e-12", "--out", "run"]);
    ok(dir.path(), &args);
    for f in ["trajectory.csv", "loops_1.csv", "loops_2.csv", "concurrence.csv", "manifest.toml"] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }
    let header = std::fs::read_to_string(dir.path().join("run/trajectory.csv")).unwrap();
    assert!(header.starts_with("t,n1,v1,i1,gamma1,n2,v2,i2,gamma2\n"));
    ok(dir.path(), &["plot-data", "--csv", "run/loops_1.csv", "--y", "form_factor"]);
    assert!(std::fs::read_to_string(dir.path().join("run/loops_1.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn rerun_reproduces_from_the_manifest_alone() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("sim.toml"), "steps_per_period = 200\nperiods = 2\n").unwrap();
    ok(dir.path(), &["--config", "sim.toml", "dataset", "--single", "--n", "6", "--out", "ds.csv"]);
    let first = std::fs::read(dir.path().join("ds.csv")).unwrap();
    std::fs::remove_file(dir.path().join("sim.toml")).unwrap();
    std::fs::remove_file(dir.path().join("ds.csv")).unwrap();
    ok(dir.path(), &["rerun", "ds.manifest.toml"]);
    assert_eq!(std::fs::read(dir.path().join("ds.csv")).unwrap(), first);
}

#[test]
fn dataset_to_model_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = FAST.to_vec();
    args.extend(["dataset", "--single", "--n", "30", "--out", "ds.csv"]);
    ok(dir.path(), &args);
    let table = ok(dir.path(), &["stats", "--data", "ds.csv", "--out", "st.csv"]);
    assert!(table.contains("count"));
    ok(dir.path(), &["train", "--data", "ds.csv", "--model", "et", "--out", "m.qml"]);
    assert!(std::fs::read_to_string(dir.path().join("m.qml")).unwrap().starts_with("QMLMODEL1"));
    ok(dir.path(), &["benchmark", "--data", "ds.csv", "--models", "knn,rf", "--out", "lb.csv"]);
    let lb = std::fs::read_to_string(dir.path().join("lb.csv")).unwrap();
    assert_eq!(lb.lines().count(), 3);
    let mut args = FAST.to_vec();
    args.extend(["optimize", "--data", "ds.csv", "--starts", "16", "--refine", "4", "--out", "opt.json"]);
    ok(dir.path(), &args);
    let opt: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("opt.json")).unwrap()).unwrap();
    let lambda = opt["features"]["lambda"].as_f64().unwrap();
    assert!((0.01..=100.0).contains(&lambda));
    assert!(opt["simulated_value"].as_f64().is_some());
    assert!(dir.path().join("opt.trace.csv").exists());
}
