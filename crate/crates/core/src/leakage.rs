//! Leakage checks run on every accepted dataset: temporal truncation,
//! train/test key overlap and grouped-fold disjointness.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crate::csvio::TableWriter;
use crate::error::{Error, Result};
use crate::ingestion::{Enrollment, EnrollmentKey, RawTables, WeeklyActivity};
use crate::person_period::{build_person_period, week_of_day, PersonPeriodTable};
use crate::splitting::{Partition, SplitResult};

/// Raw activity restricted to weeks `≤ t`.
pub fn truncate_raw(raw: &RawTables, t: u32) -> RawTables {
    RawTables {
        student_info: raw.student_info.clone(),
        registrations: raw.registrations.clone(),
        vle_clicks: raw.vle_clicks.iter().filter(|v| week_of_day(v.date) <= t).cloned().collect(),
        assessments: raw
            .assessments
            .iter()
            .filter(|a| week_of_day(a.date_submitted) <= t)
            .cloned()
            .collect(),
    }
}

/// Rows at weeks `≤ t` whose covariates change when the person-period
/// table is rebuilt from activity truncated at `t`.
pub fn truncation_mismatches(full: &PersonPeriodTable, enrollments: &[Enrollment], raw: &RawTables, t: u32) -> usize {
    let cut = build_person_period(enrollments, &WeeklyActivity::from_raw(&truncate_raw(raw, t)));
    let mut bad = 0;
    for u in 0..full.n_enrollments() {
        let a = full.rows_of(u);
        let b = cut.rows_of(u);
        for (ra, rb) in a.iter().zip(&b).take_while(|(r, _)| r.t <= t) {
            let same = ra.t == rb.t
                && ra.total_clicks == rb.total_clicks
                && ra.recency == rb.recency
                && ra.streak == rb.streak
                && ra.submitted_this_week == rb.submitted_this_week
                && ra.active == rb.active;
            bad += usize::from(!same);
        }
    }
    bad
}

pub fn train_test_overlap(split: &SplitResult) -> usize {
    let mut parts: BTreeMap<&EnrollmentKey, BTreeSet<Partition>> = BTreeMap::new();
    for a in &split.assignments {
        parts.entry(&a.key).or_default().insert(a.partition);
    }
    parts.values().filter(|p| p.len() > 1).count()
}

/// Keys with more than one fold, train keys without a fold, or test keys
/// with one.
pub fn fold_violations(split: &SplitResult) -> usize {
    let mut folds: BTreeMap<&EnrollmentKey, BTreeSet<Option<usize>>> = BTreeMap::new();
    let mut bad = 0;
    for a in &split.assignments {
        folds.entry(&a.key).or_default().insert(a.fold);
        let ok = match a.partition {
            Partition::Train => a.fold.is_some(),
            Partition::Test => a.fold.is_none(),
        };
        bad += usize::from(!ok);
    }
    bad + folds.values().filter(|f| f.len() > 1).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeakageReport {
    pub truncation_weeks: Vec<u32>,
    pub truncation_mismatches: usize,
    pub train_test_overlap: usize,
    pub fold_violations: usize,
}

impl LeakageReport {
    pub fn passed(&self) -> bool {
        self.truncation_mismatches == 0 && self.train_test_overlap == 0 && self.fold_violations == 0
    }
}

/// Truncation cutoffs: week 0, a quarter, half and three quarters of the
/// longest follow-up.
pub fn default_cutoffs(table: &PersonPeriodTable) -> Vec<u32> {
    let max = table.week.iter().copied().max().unwrap_or(0);
    let mut c: Vec<u32> = vec![0, max / 4, max / 2, 3 * max / 4];
    c.dedup();
    c
}

pub fn check_leakage(
    table: &PersonPeriodTable,
    raw: &RawTables,
    split: &SplitResult,
    cutoffs: &[u32],
) -> LeakageReport {
    LeakageReport {
        truncation_weeks: cutoffs.to_vec(),
        truncation_mismatches: cutoffs
            .iter()
            .map(|&t| truncation_mismatches(table, &table.enrollments, raw, t))
            .sum(),
        train_test_overlap: train_test_overlap(split),
        fold_violations: fold_violations(split),
    }
}

pub fn require_clean(r: &LeakageReport) -> Result<()> {
    if r.passed() {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "leakage check failed: {} truncation mismatches, {} keys in both partitions, {} fold violations",
            r.truncation_mismatches, r.train_test_overlap, r.fold_violations
        )))
    }
}

pub const LEAKAGE_TABLE: &str = "table_leakage_checks.csv";

pub fn write_leakage_table(dir: &Path, r: &LeakageReport) -> Result<PathBuf> {
    let p = dir.join(LEAKAGE_TABLE);
    let mut w = TableWriter::create(&p, &["check", "violations", "detail"])?;
    let weeks = r.truncation_weeks.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";");
    w.row(["truncation", &r.truncation_mismatches.to_string(), &format!("cutoff weeks {weeks}")])?;
    w.row(["train_test_key_overlap", &r.train_test_overlap.to_string(), ""])?;
    w.row(["grouped_fold_disjointness", &r.fold_violations.to_string(), ""])?;
    w.finish()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::{build_backbone, VleRow};
    use crate::splitting::{assign_folds, stratified_split};
    use crate::synth::{generate, SynthSpec};

    fn cohort() -> (RawTables, PersonPeriodTable) {
        let c = generate(&SynthSpec {
            n_enrollments: 120,
            ..Default::default()
        })
        .unwrap();
        let b = build_backbone(&c.raw).unwrap();
        let t = build_person_period(&b.enrollments, &WeeklyActivity::from_raw(&c.raw));
        (c.raw, t)
    }

    #[test]
    fn synthetic_cohort_is_clean() {
        let (raw, t) = cohort();
        let mut s = stratified_split(&t.enrollments, 4, 0.3, 7).unwrap();
        assign_folds(&mut s, 5, 7).unwrap();
        let r = check_leakage(&t, &raw, &s, &default_cutoffs(&t));
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn detects_future_dependent_feature() {
        let (mut raw, t) = cohort();
        // a table built from data that later gains clicks in an early week
        let e = &t.enrollments[0];
        let late = e.t_final.max(1);
        raw.vle_clicks.push(VleRow {
            key: e.key.clone(),
            date: 7 * late as i64,
            sum_click: 3,
        });
        let built = build_person_period(&t.enrollments, &WeeklyActivity::from_raw(&raw));
        // rows at weeks ≥ late change only when data at those weeks is kept
        assert_eq!(truncation_mismatches(&built, &t.enrollments, &raw, late - 1), 0);
        // a mislabelled table (activity at `late` credited to week 0) is caught
        let mut leaky = built.clone();
        leaky.total_clicks[leaky.spans[0].start] += 3.0;
        assert!(truncation_mismatches(&leaky, &t.enrollments, &raw, 0) > 0);
    }

    #[test]
    fn detects_overlap_and_fold_errors() {
        let (_, t) = cohort();
        let mut s = stratified_split(&t.enrollments, 4, 0.3, 7).unwrap();
        assign_folds(&mut s, 5, 7).unwrap();
        let mut dup = s.assignments[0].clone();
        dup.partition = match dup.partition {
            Partition::Train => Partition::Test,
            Partition::Test => Partition::Train,
        };
        dup.fold = None;
        s.assignments.push(dup);
        assert_eq!(train_test_overlap(&s), 1);
        assert!(fold_violations(&s) >= 1);
    }
}
