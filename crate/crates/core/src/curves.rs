//! Curves directory: test-set survival curves per regime, handed from
//! `simulate-policy` to `subgroup`.
//!
//! Layout: `enrollments.csv`, `baseline.csv`, one `scenario_<id>.csv` per
//! scenario, and `horizons.json`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::censoring::HorizonConfig;
use crate::error::{Error, Result};
use crate::hazard::survival::{read_curves, write_curves};
use crate::hazard::{survival_curves, SurvivalCurve};
use crate::ingestion::{read_enrollments, write_enrollments, Enrollment};
use crate::person_period::PersonPeriodTable;
use crate::policy::export::PolicyRun;
use crate::subgroup::{aligned_groups, bootstrap_ci, survival_at, BootstrapConfig, BootstrapRun, GroupMap, HorizonValues};

pub const ENROLLMENTS_FILE: &str = "enrollments.csv";
pub const BASELINE_FILE: &str = "baseline.csv";
pub const HORIZONS_FILE: &str = "horizons.json";

pub fn scenario_file(id: &str) -> String {
    format!("scenario_{id}.csv")
}

pub fn write_curves_dir(
    dir: &Path,
    table: &PersonPeriodTable,
    baseline: &[f64],
    run: &PolicyRun,
    horizons: &HorizonConfig,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let p = dir.join(ENROLLMENTS_FILE);
    write_enrollments(&p, &table.enrollments)?;
    written.push(p);
    let p = dir.join(BASELINE_FILE);
    write_curves(&p, &survival_curves(table, baseline))?;
    written.push(p);
    for o in &run.outcomes {
        let p = dir.join(scenario_file(&o.scenario.scenario_id));
        write_curves(&p, &survival_curves(table, &o.hazards))?;
        written.push(p);
    }
    let p = dir.join(HORIZONS_FILE);
    let json = serde_json::to_string_pretty(horizons).map_err(|e| Error::Contract(e.to_string()))?;
    fs::write(&p, json + "\n").map_err(|e| Error::io(&p, e))?;
    written.push(p);
    Ok(written)
}

pub struct CurvesDir {
    pub enrollments: Vec<Enrollment>,
    pub baseline: Vec<SurvivalCurve>,
    pub policy: Vec<SurvivalCurve>,
    pub horizons: HorizonConfig,
}

pub fn read_curves_dir(dir: &Path, scenario_id: &str) -> Result<CurvesDir> {
    let enrollments = read_enrollments(&dir.join(ENROLLMENTS_FILE))?;
    let baseline = read_curves(&dir.join(BASELINE_FILE))?;
    let sp = dir.join(scenario_file(scenario_id));
    if !sp.exists() {
        return Err(Error::Argument(format!(
            "no curves for scenario `{scenario_id}` in {}",
            dir.display()
        )));
    }
    let policy = read_curves(&sp)?;
    let hp = dir.join(HORIZONS_FILE);
    let text = fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
    let horizons: HorizonConfig =
        serde_json::from_str(&text).map_err(|e| Error::schema(hp.display().to_string(), e.to_string()))?;
    aligned_groups(&baseline, &policy)?;
    if enrollments.len() != baseline.len() || enrollments.iter().zip(&baseline).any(|(e, c)| e.key != c.key) {
        return Err(Error::Contract("enrollments and curves are not aligned".into()));
    }
    Ok(CurvesDir {
        enrollments,
        baseline,
        policy,
        horizons,
    })
}

/// ΔGap at `T_policy` and `T_eval_metrics` with bootstrap intervals.
pub fn subgroup_gaps(curves: &CurvesDir, map: &GroupMap, cfg: &BootstrapConfig) -> Result<BootstrapRun> {
    let groups = map.indicators(&curves.enrollments)?;
    let h = &curves.horizons;
    let values: Vec<HorizonValues> = [("T_policy", h.t_policy), ("T_eval_metrics", h.t_eval_metrics)]
        .iter()
        .map(|&(name, week)| HorizonValues {
            name: name.into(),
            week,
            baseline: survival_at(&curves.baseline, week),
            policy: survival_at(&curves.policy, week),
        })
        .collect();
    bootstrap_ci(&values, &groups, map, cfg)
}
