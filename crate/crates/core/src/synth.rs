//! Seeded synthetic cohorts in the raw-table layout, with the true weekly
//! hazards kept alongside.
//!
//! Each enrollment carries a latent at-risk flag. Every week it is active with
//! probability `p_active` (or `p_active_at_risk` when flagged), active weeks
//! get 1..=`max_clicks` clicks and submit with probability `p_submit`.
//! Recency and streak follow from the activity path. At week `t` the
//! enrollment is first censored with probability `censoring_rate`; otherwise
//! the event fires with
//!
//! ```text
//! logit h_t = logit(base_hazard) + Σ effect_f · x_f(t)
//! ```
//!
//! The last observed week of a non-event enrollment is always active, so the
//! last-activity censoring anchor recovers the true follow-up.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::csvio::{fmt_f64, TableWriter};
use crate::error::{Error, Result};
use crate::hazard::logistic::sigmoid;
use crate::ingestion::{
    EnrollmentKey, FinalResult, RawTables, RegistrationRow, Statics, StudentInfoRow, SubmissionRow, VleRow,
};
use crate::person_period::step_state;
use crate::rng::{stream_rng, Stream};

pub const EFFECT_NAMES: [&str; 7] = ["inactive", "recency", "streak", "submitted", "log_clicks", "at_risk", "gender_F"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_enrollments: usize,
    pub max_weeks: u32,
    pub base_hazard: f64,
    pub censoring_rate: f64,
    pub seed: u64,
    pub at_risk_share: f64,
    pub p_active: f64,
    pub p_active_at_risk: f64,
    pub p_submit: f64,
    pub max_clicks: u32,
    /// Share of completers recorded as Fail.
    pub fail_share: f64,
    pub female_share: f64,
    /// `(code_module, code_presentation)` runs, assigned round-robin.
    pub runs: Vec<(String, String)>,
    /// Log-odds shift per unit of each feature; keys from [`EFFECT_NAMES`].
    pub effects: BTreeMap<String, f64>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_enrollments: 1000,
            max_weeks: 40,
            base_hazard: 0.02,
            censoring_rate: 0.02,
            seed: 42,
            at_risk_share: 0.3,
            p_active: 0.8,
            p_active_at_risk: 0.4,
            p_submit: 0.15,
            max_clicks: 30,
            fail_share: 0.25,
            female_share: 0.45,
            runs: [("AAA", "2013J"), ("BBB", "2013B"), ("CCC", "2014B"), ("DDD", "2014J")]
                .iter()
                .map(|(m, p)| (m.to_string(), p.to_string()))
                .collect(),
            effects: BTreeMap::from([("inactive".to_string(), 1.0), ("recency".to_string(), 0.15)]),
        }
    }
}

impl SynthSpec {
    /// Constant hazard, no covariate effects, no censoring.
    pub fn constant(n: usize, max_weeks: u32, hazard: f64, seed: u64) -> Self {
        SynthSpec {
            n_enrollments: n,
            max_weeks,
            base_hazard: hazard,
            censoring_rate: 0.0,
            seed,
            effects: BTreeMap::new(),
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SynthSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, x: f64, lo_open: bool| -> Result<()> {
            let ok = if lo_open { x > 0.0 && x < 1.0 } else { (0.0..=1.0).contains(&x) };
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("synth `{name}` = {x} is not a valid probability")))
            }
        };
        if self.n_enrollments == 0 {
            return Err(Error::Config("synth `n_enrollments` must be ≥ 1".into()));
        }
        if self.max_weeks == 0 {
            return Err(Error::Config("synth `max_weeks` must be ≥ 1".into()));
        }
        if self.max_clicks == 0 {
            return Err(Error::Config("synth `max_clicks` must be ≥ 1".into()));
        }
        if self.runs.is_empty() {
            return Err(Error::Config("synth `runs` is empty".into()));
        }
        prob("base_hazard", self.base_hazard, true)?;
        prob("censoring_rate", self.censoring_rate, false)?;
        for (n, x) in [
            ("at_risk_share", self.at_risk_share),
            ("p_active", self.p_active),
            ("p_active_at_risk", self.p_active_at_risk),
            ("p_submit", self.p_submit),
            ("fail_share", self.fail_share),
            ("female_share", self.female_share),
        ] {
            prob(n, x, false)?;
        }
        for (k, v) in &self.effects {
            if !EFFECT_NAMES.contains(&k.as_str()) {
                return Err(Error::Config(format!(
                    "unknown synth effect `{k}` (expected one of {})",
                    EFFECT_NAMES.join(", ")
                )));
            }
            if !v.is_finite() {
                return Err(Error::Config(format!("synth effect `{k}` is not finite")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub key: EnrollmentKey,
    pub at_risk: bool,
    pub event_week: Option<u32>,
    pub censor_week: Option<u32>,
    /// True hazard for weeks `0..=t_final`.
    pub hazards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCohort {
    pub raw: RawTables,
    pub truth: Vec<TruthRecord>,
}

const EDUCATION: [&str; 4] = [
    "A Level or Equivalent",
    "Lower Than A Level",
    "HE Qualification",
    "No Formal quals",
];
const AGE: [&str; 3] = ["0-35", "35-55", "55<="];

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCohort> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, Stream::Synth);
    let eff = |k: &str| spec.effects.get(k).copied().unwrap_or(0.0);
    let base = logit(spec.base_hazard);
    let mut raw = RawTables::default();
    let mut truth = Vec::with_capacity(spec.n_enrollments);

    for i in 0..spec.n_enrollments {
        let (m, p) = &spec.runs[i % spec.runs.len()];
        let key = EnrollmentKey::new(100_000 + i as i64, m, p);
        let female = rng.gen_bool(spec.female_share);
        let at_risk = rng.gen_bool(spec.at_risk_share);
        let statics = Statics {
            gender: if female { "F" } else { "M" }.into(),
            highest_education: EDUCATION[rng.gen_range(0..EDUCATION.len())].into(),
            age_band: AGE[rng.gen_range(0..AGE.len())].into(),
            num_of_prev_attempts: f64::from(u8::from(rng.gen_bool(0.1))),
            studied_credits: f64::from(rng.gen_range(2u32..=8) * 15),
        };
        let p_act = if at_risk { spec.p_active_at_risk } else { spec.p_active };

        let mut hazards = Vec::new();
        let mut state = None;
        let mut event_week = None;
        let mut censor_week = None;
        for t in 0..spec.max_weeks {
            let last_week = t + 1 == spec.max_weeks;
            let censored = rng.gen_bool(spec.censoring_rate);
            let mut active = rng.gen_bool(p_act);
            if censored || last_week {
                active = true;
            }
            let clicks = if active { rng.gen_range(1..=spec.max_clicks) } else { 0 };
            let submitted = active && rng.gen_bool(spec.p_submit);
            let (recency, streak) = step_state(active, state);
            state = Some((recency, streak));

            let z = base
                + eff("inactive") * f64::from(u8::from(!active))
                + eff("recency") * f64::from(recency)
                + eff("streak") * f64::from(streak)
                + eff("submitted") * f64::from(u8::from(submitted))
                + eff("log_clicks") * f64::from(clicks).ln_1p()
                + eff("at_risk") * f64::from(u8::from(at_risk))
                + eff("gender_F") * f64::from(u8::from(female));
            let h = if z == base { spec.base_hazard } else { sigmoid(z) };
            hazards.push(h);

            if clicks > 0 {
                raw.vle_clicks.push(VleRow {
                    key: key.clone(),
                    date: i64::from(7 * t + rng.gen_range(0..7)),
                    sum_click: u64::from(clicks),
                });
            }
            if submitted {
                raw.assessments.push(SubmissionRow {
                    key: key.clone(),
                    date_submitted: i64::from(7 * t + rng.gen_range(0..7)),
                });
            }
            if censored {
                censor_week = Some(t);
                break;
            }
            if rng.gen_bool(h) {
                event_week = Some(t);
                break;
            }
            if last_week {
                censor_week = Some(t);
            }
        }

        let final_result = match (event_week, censor_week) {
            (Some(_), _) => FinalResult::Withdrawn,
            (None, Some(c)) if c + 1 < spec.max_weeks => FinalResult::Fail,
            _ if rng.gen_bool(spec.fail_share) => FinalResult::Fail,
            _ => FinalResult::Pass,
        };
        raw.registrations.push(RegistrationRow {
            key: key.clone(),
            date_registration: Some(-rng.gen_range(1..60i64)),
            date_unregistration: event_week.map(|t| i64::from(7 * t + rng.gen_range(0..7))),
        });
        raw.student_info.push(StudentInfoRow {
            key: key.clone(),
            statics,
            final_result,
        });
        truth.push(TruthRecord {
            key,
            at_risk,
            event_week,
            censor_week,
            hazards,
        });
    }
    Ok(SynthCohort { raw, truth })
}

/// File stems written by [`write_raw_tables`].
pub const RAW_FILES: [&str; 5] = [
    "studentInfo",
    "studentRegistration",
    "studentVle",
    "studentAssessment",
    "assessments",
];

fn assessment_id(run: usize, week: u32) -> i64 {
    (run as i64 + 1) * 10_000 + i64::from(week)
}

/// Writes the cohort in the raw-table layout (`<stem>.csv`) plus
/// `ground_truth.csv`. Submissions reference one assessment per run-week
/// listed in `assessments.csv`.
pub fn write_raw_tables(dir: &Path, cohort: &SynthCohort) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let raw = &cohort.raw;

    let p = dir.join("studentInfo.csv");
    let mut w = TableWriter::create(
        &p,
        &[
            "code_module",
            "code_presentation",
            "id_student",
            "gender",
            "region",
            "highest_education",
            "imd_band",
            "age_band",
            "num_of_prev_attempts",
            "studied_credits",
            "disability",
            "final_result",
        ],
    )?;
    for r in &raw.student_info {
        w.row([
            r.key.code_module.clone(),
            r.key.code_presentation.clone(),
            r.key.id_student.to_string(),
            r.statics.gender.clone(),
            "Synthetic Region".into(),
            r.statics.highest_education.clone(),
            "?".into(),
            r.statics.age_band.clone(),
            r.statics.num_of_prev_attempts.to_string(),
            r.statics.studied_credits.to_string(),
            "N".into(),
            r.final_result.as_str().into(),
        ])?;
    }
    w.finish()?;
    written.push(p);

    let p = dir.join("studentRegistration.csv");
    let mut w = TableWriter::create(
        &p,
        &["code_module", "code_presentation", "id_student", "date_registration", "date_unregistration"],
    )?;
    let opt = |x: Option<i64>| x.map(|d| d.to_string()).unwrap_or_default();
    for r in &raw.registrations {
        w.row([
            r.key.code_module.clone(),
            r.key.code_presentation.clone(),
            r.key.id_student.to_string(),
            opt(r.date_registration),
            opt(r.date_unregistration),
        ])?;
    }
    w.finish()?;
    written.push(p);

    let p = dir.join("studentVle.csv");
    let mut w = TableWriter::create(
        &p,
        &["code_module", "code_presentation", "id_student", "id_site", "date", "sum_click"],
    )?;
    for r in &raw.vle_clicks {
        w.row([
            r.key.code_module.clone(),
            r.key.code_presentation.clone(),
            r.key.id_student.to_string(),
            "1".into(),
            r.date.to_string(),
            r.sum_click.to_string(),
        ])?;
    }
    w.finish()?;
    written.push(p);

    let run_index: BTreeMap<(String, String), usize> = cohort
        .truth
        .iter()
        .map(|t| t.key.run())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, r)| (r, i))
        .collect();
    let max_week = raw
        .assessments
        .iter()
        .map(|a| crate::person_period::week_of_day(a.date_submitted))
        .max()
        .unwrap_or(0);

    let p = dir.join("assessments.csv");
    let mut w = TableWriter::create(
        &p,
        &["code_module", "code_presentation", "id_assessment", "assessment_type", "date", "weight"],
    )?;
    for ((m, pr), &ri) in &run_index {
        for wk in 0..=max_week {
            w.row([
                m.clone(),
                pr.clone(),
                assessment_id(ri, wk).to_string(),
                "TMA".into(),
                (7 * wk + 6).to_string(),
                "0".into(),
            ])?;
        }
    }
    w.finish()?;
    written.push(p);

    let p = dir.join("studentAssessment.csv");
    let mut w = TableWriter::create(&p, &["id_assessment", "id_student", "date_submitted", "is_banked", "score"])?;
    for a in &raw.assessments {
        let ri = run_index[&a.key.run()];
        let wk = crate::person_period::week_of_day(a.date_submitted);
        w.row([
            assessment_id(ri, wk).to_string(),
            a.key.id_student.to_string(),
            a.date_submitted.to_string(),
            "0".into(),
            "70".into(),
        ])?;
    }
    w.finish()?;
    written.push(p);

    let p = dir.join("ground_truth.csv");
    let mut w = TableWriter::create(
        &p,
        &["id_student", "code_module", "code_presentation", "at_risk", "week", "true_hazard", "event"],
    )?;
    for t in &cohort.truth {
        for (wk, h) in t.hazards.iter().enumerate() {
            w.row([
                t.key.id_student.to_string(),
                t.key.code_module.clone(),
                t.key.code_presentation.clone(),
                u8::from(t.at_risk).to_string(),
                wk.to_string(),
                fmt_f64(*h),
                u8::from(t.event_week == Some(wk as u32)).to_string(),
            ])?;
        }
    }
    w.finish()?;
    written.push(p);
    Ok(written)
}
