use std::collections::BTreeSet;
use std::path::Path;

use weekhaz_core::config::RunConfig;
use weekhaz_core::pipeline::{read_manifest, run_all, MANIFEST_FILE};
use weekhaz_core::policy::export::POLICY_TABLES;
use weekhaz_core::subgroup::{gap_table_name, REPLICATES_TABLE, WIDE_TABLE};
use weekhaz_core::synth::{generate, write_raw_tables, SynthSpec};

fn config(data: &Path, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.paths.data_dir = data.to_path_buf();
    cfg.paths.out_root = out.to_path_buf();
    cfg.subgroup.bootstrap.replicates = 40;
    cfg.evaluation.holdout_runs = 2;
    cfg
}

fn synth_data(dir: &Path) {
    let spec = SynthSpec {
        n_enrollments: 400,
        ..Default::default()
    };
    write_raw_tables(dir, &generate(&spec).unwrap()).unwrap();
}

#[test]
fn run_all_exports_every_table_once() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_data(&data);
    let cfg = config(&data, &tmp.path().join("out"));
    let m = run_all(&cfg).unwrap();
    let paths: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
    let unique: BTreeSet<&str> = paths.iter().copied().collect();
    assert_eq!(unique.len(), paths.len());
    let h = m.horizons.unwrap();
    let mut expected: Vec<String> = POLICY_TABLES.iter().map(|s| s.to_string()).collect();
    expected.extend([WIDE_TABLE.to_string(), REPLICATES_TABLE.to_string()]);
    expected.push(gap_table_name(h.t_policy));
    expected.push(gap_table_name(h.t_eval_metrics));
    expected.push("table_censoring_anchor_sensitivity.csv".into());
    expected.push("table_endpoint_sensitivity.csv".into());
    for name in expected {
        let p = format!("tables/{name}");
        assert!(unique.contains(p.as_str()), "missing {p}");
    }
    for f in &m.files {
        assert!(tmp.path().join("out").join(&f.path).exists());
        assert_eq!(f.sha256.len(), 64);
    }
    assert!(tmp.path().join("out").join(MANIFEST_FILE).exists());
    assert_eq!(read_manifest(&tmp.path().join("out")).unwrap(), m);
}

#[test]
fn stage_failure_names_stage_and_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(&tmp.path().join("missing"), &tmp.path().join("out"));
    let e = run_all(&cfg).unwrap_err();
    assert_eq!(e.stage, "ingest");
    assert_eq!(e.code(), "E_IO");
    assert!(e.to_string().contains("ingest"));
}
