//! Weekly person-period expansion with temporally safe dynamic covariates.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;

use crate::csvio::{self, Columns, TableWriter};
use crate::error::{Error, Result};
use crate::ingestion::{Enrollment, EnrollmentKey, FinalResult, Statics, WeeklyActivity};

/// `max(floor(d / 7), 0)`.
pub fn week_of_day(d: i64) -> u32 {
    d.div_euclid(7).max(0) as u32
}

/// Recency/streak state after observing one week.
///
/// `prev` is the state of the previous week; `None` at week 0, where both
/// counters start from zero, so an inactive first week has recency 1.
pub fn step_state(active: bool, prev: Option<(u32, u32)>) -> (u32, u32) {
    let (prev_recency, prev_streak) = prev.unwrap_or((0, 0));
    if active {
        (0, prev_streak + 1)
    } else {
        (prev_recency + 1, 0)
    }
}

/// One enrollment-week. Key and statics come from the owning enrollment.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonPeriodRow {
    pub t: u32,
    pub total_clicks: f64,
    pub recency: u32,
    pub streak: u32,
    pub submitted_this_week: bool,
    pub active: bool,
    pub event: bool,
}

/// Expands one enrollment into weeks `0..=t_final`. Clicks in weeks after
/// `t_final` are ignored.
pub fn expand(
    e: &Enrollment,
    weekly_clicks: Option<&BTreeMap<u32, f64>>,
    weekly_submissions: Option<&BTreeSet<u32>>,
) -> Vec<PersonPeriodRow> {
    let mut rows = Vec::with_capacity(e.t_final as usize + 1);
    let mut state = None;
    for t in 0..=e.t_final {
        let total_clicks = weekly_clicks
            .and_then(|m| m.get(&t))
            .copied()
            .unwrap_or(0.0);
        let active = total_clicks > 0.0;
        let (recency, streak) = step_state(active, state);
        state = Some((recency, streak));
        rows.push(PersonPeriodRow {
            t,
            total_clicks,
            recency,
            streak,
            submitted_this_week: weekly_submissions.is_some_and(|s| s.contains(&t)),
            active,
            event: e.event && t == e.t_final,
        });
    }
    rows
}

/// Columnar person-period table. Rows are sorted by enrollment key then week;
/// `spans[u]` is the row range of enrollment `u`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PersonPeriodTable {
    pub enrollments: Vec<Enrollment>,
    pub spans: Vec<Range<usize>>,
    pub unit: Vec<u32>,
    pub week: Vec<u32>,
    pub total_clicks: Vec<f64>,
    pub recency: Vec<u32>,
    pub streak: Vec<u32>,
    pub submitted: Vec<bool>,
    pub active: Vec<bool>,
    pub event: Vec<bool>,
}

impl PersonPeriodTable {
    pub fn from_rows(units: Vec<(Enrollment, Vec<PersonPeriodRow>)>) -> Self {
        let n: usize = units.iter().map(|(_, r)| r.len()).sum();
        let mut table = PersonPeriodTable {
            enrollments: Vec::with_capacity(units.len()),
            spans: Vec::with_capacity(units.len()),
            unit: Vec::with_capacity(n),
            week: Vec::with_capacity(n),
            total_clicks: Vec::with_capacity(n),
            recency: Vec::with_capacity(n),
            streak: Vec::with_capacity(n),
            submitted: Vec::with_capacity(n),
            active: Vec::with_capacity(n),
            event: Vec::with_capacity(n),
        };
        for (u, (e, rows)) in units.into_iter().enumerate() {
            let start = table.week.len();
            for r in rows {
                table.unit.push(u as u32);
                table.week.push(r.t);
                table.total_clicks.push(r.total_clicks);
                table.recency.push(r.recency);
                table.streak.push(r.streak);
                table.submitted.push(r.submitted_this_week);
                table.active.push(r.active);
                table.event.push(r.event);
            }
            table.spans.push(start..table.week.len());
            table.enrollments.push(e);
        }
        table
    }

    pub fn n_rows(&self) -> usize {
        self.week.len()
    }

    pub fn n_enrollments(&self) -> usize {
        self.enrollments.len()
    }

    pub fn enrollment_of(&self, row: usize) -> &Enrollment {
        &self.enrollments[self.unit[row] as usize]
    }

    pub fn row(&self, r: usize) -> PersonPeriodRow {
        PersonPeriodRow {
            t: self.week[r],
            total_clicks: self.total_clicks[r],
            recency: self.recency[r],
            streak: self.streak[r],
            submitted_this_week: self.submitted[r],
            active: self.active[r],
            event: self.event[r],
        }
    }

    pub fn rows_of(&self, u: usize) -> Vec<PersonPeriodRow> {
        self.spans[u].clone().map(|r| self.row(r)).collect()
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    /// Copy holding only the enrollments accepted by `keep`.
    pub fn select(&self, mut keep: impl FnMut(&Enrollment) -> bool) -> PersonPeriodTable {
        let units = self
            .enrollments
            .iter()
            .enumerate()
            .filter(|(_, e)| keep(e))
            .map(|(u, e)| (e.clone(), self.rows_of(u)))
            .collect();
        PersonPeriodTable::from_rows(units)
    }

    /// Rows with week ≤ `t_max` only; enrollments keep their metadata and
    /// terminal labels stay on their original week.
    pub fn truncate_weeks(&self, t_max: u32) -> PersonPeriodTable {
        let units = self
            .enrollments
            .iter()
            .enumerate()
            .map(|(u, e)| {
                let rows = self.rows_of(u).into_iter().filter(|r| r.t <= t_max).collect();
                (e.clone(), rows)
            })
            .collect();
        PersonPeriodTable::from_rows(units)
    }

    /// Moves the observation end of non-event enrollments `trim` weeks
    /// earlier (clamped at 0), dropping the trimmed rows.
    pub fn trim_non_event_anchor(&self, trim: u32) -> PersonPeriodTable {
        let units = self
            .enrollments
            .iter()
            .enumerate()
            .map(|(u, e)| {
                let mut e = e.clone();
                if !e.event {
                    e.t_last_obs = e.t_last_obs.saturating_sub(trim);
                    e.t_final = e.t_final.saturating_sub(trim);
                }
                let rows = self
                    .rows_of(u)
                    .into_iter()
                    .filter(|r| r.t <= e.t_final)
                    .collect();
                (e, rows)
            })
            .collect();
        PersonPeriodTable::from_rows(units)
    }
}

/// Expands every enrollment; output is sorted by key then week.
pub fn build_person_period(enrollments: &[Enrollment], activity: &WeeklyActivity) -> PersonPeriodTable {
    let mut sorted: Vec<&Enrollment> = enrollments.iter().collect();
    sorted.sort_by(|a, b| a.key.cmp(&b.key));
    let units: Vec<(Enrollment, Vec<PersonPeriodRow>)> = sorted
        .par_iter()
        .map(|e| {
            let rows = expand(e, activity.clicks.get(&e.key), activity.submissions.get(&e.key));
            ((*e).clone(), rows)
        })
        .collect();
    PersonPeriodTable::from_rows(units)
}

/// Column order of the person-period file.
pub const PP_HEADER: [&str; 20] = [
    "id_student",
    "code_module",
    "code_presentation",
    "week",
    "total_clicks",
    "recency",
    "streak",
    "submitted_this_week",
    "active",
    "event",
    "gender",
    "highest_education",
    "age_band",
    "num_of_prev_attempts",
    "studied_credits",
    "final_result",
    "enrollment_event",
    "t_event",
    "t_last_obs",
    "t_final",
];

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_person_period(path: &Path, table: &PersonPeriodTable) -> Result<()> {
    let mut w = TableWriter::create(path, &PP_HEADER)?;
    for (u, e) in table.enrollments.iter().enumerate() {
        for r in table.spans[u].clone() {
            w.row([
                e.key.id_student.to_string(),
                e.key.code_module.clone(),
                e.key.code_presentation.clone(),
                table.week[r].to_string(),
                table.total_clicks[r].to_string(),
                table.recency[r].to_string(),
                table.streak[r].to_string(),
                flag(table.submitted[r]).to_string(),
                flag(table.active[r]).to_string(),
                flag(table.event[r]).to_string(),
                e.statics.gender.clone(),
                e.statics.highest_education.clone(),
                e.statics.age_band.clone(),
                e.statics.num_of_prev_attempts.to_string(),
                e.statics.studied_credits.to_string(),
                e.final_result.as_str().to_string(),
                flag(e.event).to_string(),
                e.t_event.map(|t| t.to_string()).unwrap_or_default(),
                e.t_last_obs.to_string(),
                e.t_final.to_string(),
            ])?;
        }
    }
    w.finish()
}

pub fn read_person_period(path: &Path) -> Result<PersonPeriodTable> {
    const T: &str = "person_period";
    let mut rdr = csvio::open_reader(path)?;
    let cols = Columns::from_headers(T, rdr.headers()?);
    let idx: Vec<usize> = PP_HEADER.iter().map(|c| cols.require(c)).collect::<Result<_>>()?;
    let mut units: Vec<(Enrollment, Vec<PersonPeriodRow>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| rec[idx[i]].trim();
        let int = |i: usize| csvio::parse_i64(T, PP_HEADER[i], line, get(i));
        let key = EnrollmentKey {
            id_student: int(0)?,
            code_module: get(1).to_string(),
            code_presentation: get(2).to_string(),
        };
        let row = PersonPeriodRow {
            t: int(3)? as u32,
            total_clicks: csvio::parse_f64(T, "total_clicks", line, get(4))?,
            recency: int(5)? as u32,
            streak: int(6)? as u32,
            submitted_this_week: get(7) == "1",
            active: get(8) == "1",
            event: get(9) == "1",
        };
        let same = units.last().is_some_and(|(e, _)| e.key == key);
        if !same {
            if units.last().is_some_and(|(e, _)| e.key > key) {
                return Err(Error::schema(T, format!("line {line}: rows not sorted by enrollment key")));
            }
            let enrollment = Enrollment {
                key,
                statics: Statics {
                    gender: get(10).to_string(),
                    highest_education: get(11).to_string(),
                    age_band: get(12).to_string(),
                    num_of_prev_attempts: csvio::parse_f64(T, "num_of_prev_attempts", line, get(13))?,
                    studied_credits: csvio::parse_f64(T, "studied_credits", line, get(14))?,
                },
                final_result: get(15)
                    .parse::<FinalResult>()
                    .map_err(|e| Error::schema(T, format!("line {line}: {e}")))?,
                date_unregistration: None,
                event: get(16) == "1",
                t_event: if get(17).is_empty() { None } else { Some(int(17)? as u32) },
                t_last_obs: int(18)? as u32,
                t_final: int(19)? as u32,
            };
            units.push((enrollment, Vec::new()));
        }
        let (e, rows) = units.last_mut().expect("unit pushed above");
        if row.t as usize != rows.len() {
            return Err(Error::schema(
                T,
                format!("line {line}: enrollment {} weeks not contiguous from 0", e.key),
            ));
        }
        rows.push(row);
    }
    for (e, rows) in &units {
        if rows.len() != e.t_final as usize + 1 {
            return Err(Error::schema(
                T,
                format!("enrollment {} has {} rows but t_final {}", e.key, rows.len(), e.t_final),
            ));
        }
    }
    Ok(PersonPeriodTable::from_rows(units))
}
