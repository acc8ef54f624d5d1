use std::path::Path;
use std::process::{Command, Output};

fn weekhaz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weekhaz"))
        .args(args)
        .output()
        .expect("spawn weekhaz")
}

fn ok(args: &[&str]) -> Output {
    let o = weekhaz(args);
    assert!(
        o.status.success(),
        "weekhaz {args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn synth(dir: &Path, n: usize) -> String {
    let spec = dir.join("spec.toml");
    std::fs::write(&spec, format!("n_enrollments = {n}\nseed = 9\n")).unwrap();
    let data = dir.join("data");
    ok(&["synthesize", "--spec", s(&spec), "--out-dir", s(&data)]);
    s(&data).to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stages_chain_through_work_files() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let data = synth(root, 300);
    let out = root.join("out");
    let w = |f: &str| root.join(f).to_str().unwrap().to_string();
    let g = ["--out-root", s(&out)];
    let run = |args: &[&str]| ok(&[args, &g[..]].concat());

    run(&["ingest", "--data-dir", &data, "--out", &w("enr.csv")]);
    run(&["build-person-period", "--enrollments", &w("enr.csv"), "--data-dir", &data, "--out", &w("pp.csv")]);
    run(&["split", "--pp", &w("pp.csv"), "--out", &w("split.csv")]);
    let io = ["--pp", &w("pp.csv"), "--split", &w("split.csv")];
    run(&[&["train", "--out", &w("model.json")], &io[..]].concat());
    run(&[&["censoring", "--out", &w("gmodel.json"), "--anchor-variant", "trim1"], &io[..]].concat());
    run(&[&["evaluate", "--model", &w("model.json"), "--gmodel", &w("gmodel.json"), "--endpoint", "composite"], &io[..]].concat());
    run(&[&["simulate-policy", "--model", &w("model.json"), "--gmodel", &w("gmodel.json"), "--curves-dir", &w("curves")], &io[..]].concat());
    run(&["subgroup", "--curves-dir", &w("curves"), "--B", "40"]);

    let tables = out.join("tables");
    for f in [
        "table_ingest_report.csv",
        "table_split_counts.csv",
        "table_model_coefficients.csv",
        "table_censoring_anchor_sensitivity.csv",
        "table_endpoint_sensitivity.csv",
        "table_metrics_by_horizon.csv",
        "table_rq2_sensitivity_grid.csv",
        "table_policy_scenarios_main.csv",
    ] {
        assert!(tables.join(f).is_file(), "missing {f}");
    }
    let endpoints = std::fs::read_to_string(tables.join("table_endpoint_sensitivity.csv")).unwrap();
    assert!(endpoints.contains("composite"));
}

#[test]
fn holdout_split_puts_the_run_in_test() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let data = synth(root, 200);
    let enr = root.join("enr.csv");
    let pp = root.join("pp.csv");
    let split = root.join("split.csv");
    let out = root.join("out");
    let g = ["--out-root", s(&out)];
    ok(&[&["ingest", "--data-dir", &data, "--out", s(&enr)], &g[..]].concat());
    ok(&[&["build-person-period", "--enrollments", s(&enr), "--data-dir", &data, "--out", s(&pp)], &g[..]].concat());
    ok(&[&["split", "--pp", s(&pp), "--out", s(&split), "--holdout-run", "AAA,2013J"], &g[..]].concat());
    let mut r = csv::Reader::from_path(&split).unwrap();
    let h = r.headers().unwrap().clone();
    let col = |n: &str| h.iter().position(|x| x == n).unwrap();
    let (m, p, part) = (col("code_module"), col("code_presentation"), col("partition"));
    for rec in r.records() {
        let rec = rec.unwrap();
        let held = &rec[m] == "AAA" && &rec[p] == "2013J";
        assert_eq!(&rec[part] == "test", held);
    }
}

#[test]
fn run_all_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 300);
    let out = tmp.path().join("out");
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "[subgroup.bootstrap]\nreplicates = 30\n").unwrap();
    ok(&["run-all", "--config", s(&cfg), "--data-dir", &data, "--out-root", s(&out)]);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let files = m["files"].as_array().unwrap();
    assert!(files.len() > 30);
    assert!(files.iter().all(|f| f["sha256"].as_str().unwrap().len() == 64));
    assert_eq!(m["config"]["subgroup"]["bootstrap"]["replicates"], 30);
}

#[test]
fn unknown_config_key_is_rejected_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[split]\nqq = 4\n").unwrap();
    let o = weekhaz(&["run-all", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("E_CONFIG") && err.contains("qq"), "{err}");
}

#[test]
fn missing_data_names_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let o = weekhaz(&[
        "run-all",
        "--data-dir",
        s(&tmp.path().join("nope")),
        "--out-root",
        s(&tmp.path().join("out")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("ingest"), "{err}");
}
