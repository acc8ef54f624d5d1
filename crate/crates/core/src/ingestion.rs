//! Raw table loading, the deduplicated enrollment backbone and the primary
//! endpoint.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::csvio::{self, Columns, TableWriter};
use crate::error::{Error, Result};
use crate::person_period::week_of_day;

/// Level used for missing categorical values.
pub const UNKNOWN_LEVEL: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EnrollmentKey {
    pub id_student: i64,
    pub code_module: String,
    pub code_presentation: String,
}

impl EnrollmentKey {
    pub fn new(id_student: i64, code_module: &str, code_presentation: &str) -> Self {
        EnrollmentKey {
            id_student,
            code_module: code_module.to_string(),
            code_presentation: code_presentation.to_string(),
        }
    }

    /// `(code_module, code_presentation)` course run.
    pub fn run(&self) -> (String, String) {
        (self.code_module.clone(), self.code_presentation.clone())
    }
}

impl fmt::Display for EnrollmentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}",
            self.id_student, self.code_module, self.code_presentation
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FinalResult {
    Pass,
    Fail,
    Withdrawn,
    Distinction,
}

impl FinalResult {
    pub fn as_str(self) -> &'static str {
        match self {
            FinalResult::Pass => "Pass",
            FinalResult::Fail => "Fail",
            FinalResult::Withdrawn => "Withdrawn",
            FinalResult::Distinction => "Distinction",
        }
    }
}

impl FromStr for FinalResult {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "Pass" => Ok(FinalResult::Pass),
            "Fail" => Ok(FinalResult::Fail),
            "Withdrawn" => Ok(FinalResult::Withdrawn),
            "Distinction" => Ok(FinalResult::Distinction),
            other => Err(format!("unknown final_result `{other}`")),
        }
    }
}

/// Static covariates carried by every row of an enrollment. `code_module`
/// and `code_presentation` live on the key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statics {
    pub gender: String,
    pub highest_education: String,
    pub age_band: String,
    pub num_of_prev_attempts: f64,
    pub studied_credits: f64,
}

impl Statics {
    /// Categorical static by column name (including the key's run columns).
    pub fn categorical<'a>(&'a self, key: &'a EnrollmentKey, column: &str) -> Option<&'a str> {
        match column {
            "gender" => Some(&self.gender),
            "highest_education" => Some(&self.highest_education),
            "age_band" => Some(&self.age_band),
            "code_module" => Some(&key.code_module),
            "code_presentation" => Some(&key.code_presentation),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentInfoRow {
    pub key: EnrollmentKey,
    pub statics: Statics,
    pub final_result: FinalResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationRow {
    pub key: EnrollmentKey,
    pub date_registration: Option<i64>,
    pub date_unregistration: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VleRow {
    pub key: EnrollmentKey,
    pub date: i64,
    pub sum_click: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubmissionRow {
    pub key: EnrollmentKey,
    pub date_submitted: i64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawTables {
    pub student_info: Vec<StudentInfoRow>,
    pub registrations: Vec<RegistrationRow>,
    pub vle_clicks: Vec<VleRow>,
    pub assessments: Vec<SubmissionRow>,
}

/// One student-course-presentation unit with its derived endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enrollment {
    pub key: EnrollmentKey,
    pub final_result: FinalResult,
    pub date_unregistration: Option<i64>,
    /// Primary endpoint indicator.
    pub event: bool,
    pub t_event: Option<u32>,
    pub t_last_obs: u32,
    pub t_final: u32,
    pub statics: Statics,
}

/// File layout of a raw data directory.
#[derive(Debug, Clone)]
pub struct DataFiles {
    pub dir: PathBuf,
    pub extension: String,
}

impl DataFiles {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DataFiles {
            dir: dir.into(),
            extension: "csv".to_string(),
        }
    }

    pub fn with_extension(mut self, ext: &str) -> Self {
        self.extension = ext.trim_start_matches('.').to_string();
        self
    }

    pub fn path(&self, stem: &str) -> PathBuf {
        self.dir.join(format!("{stem}.{}", self.extension))
    }
}

fn categorical(raw: &str) -> String {
    let v = raw.trim();
    if v.is_empty() || v == "?" {
        UNKNOWN_LEVEL.to_string()
    } else {
        v.to_string()
    }
}

struct KeyColumns {
    id_student: usize,
    code_module: usize,
    code_presentation: usize,
}

impl KeyColumns {
    fn require(cols: &Columns) -> Result<Self> {
        Ok(KeyColumns {
            id_student: cols.require("id_student")?,
            code_module: cols.require("code_module")?,
            code_presentation: cols.require("code_presentation")?,
        })
    }

    fn key(&self, table: &str, line: u64, rec: &csv::StringRecord) -> Result<EnrollmentKey> {
        Ok(EnrollmentKey {
            id_student: csvio::parse_i64(table, "id_student", line, &rec[self.id_student])?,
            code_module: rec[self.code_module].trim().to_string(),
            code_presentation: rec[self.code_presentation].trim().to_string(),
        })
    }
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

pub fn read_student_info(path: &Path) -> Result<Vec<StudentInfoRow>> {
    const T: &str = "studentInfo";
    let mut rdr = csvio::open_reader(path)?;
    let cols = Columns::from_headers(T, rdr.headers()?);
    let key = KeyColumns::require(&cols)?;
    let gender = cols.require("gender")?;
    let edu = cols.require("highest_education")?;
    let age = cols.require("age_band")?;
    let prev = cols.require("num_of_prev_attempts")?;
    let credits = cols.require("studied_credits")?;
    let result = cols.require("final_result")?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let final_result = rec[result]
            .parse::<FinalResult>()
            .map_err(|e| Error::schema(T, format!("line {line}: {e}")))?;
        out.push(StudentInfoRow {
            key: key.key(T, line, &rec)?,
            statics: Statics {
                gender: categorical(&rec[gender]),
                highest_education: categorical(&rec[edu]),
                age_band: categorical(&rec[age]),
                num_of_prev_attempts: csvio::parse_f64(T, "num_of_prev_attempts", line, &rec[prev])?,
                studied_credits: csvio::parse_f64(T, "studied_credits", line, &rec[credits])?,
            },
            final_result,
        });
    }
    Ok(out)
}

pub fn read_registrations(path: &Path) -> Result<Vec<RegistrationRow>> {
    const T: &str = "studentRegistration";
    let mut rdr = csvio::open_reader(path)?;
    let cols = Columns::from_headers(T, rdr.headers()?);
    let key = KeyColumns::require(&cols)?;
    let reg = cols.require("date_registration")?;
    let unreg = cols.require("date_unregistration")?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        out.push(RegistrationRow {
            key: key.key(T, line, &rec)?,
            date_registration: csvio::parse_opt_i64(&rec[reg]),
            date_unregistration: csvio::parse_opt_i64(&rec[unreg]),
        });
    }
    Ok(out)
}

pub fn read_vle(path: &Path) -> Result<Vec<VleRow>> {
    const T: &str = "studentVle";
    let mut rdr = csvio::open_reader(path)?;
    let cols = Columns::from_headers(T, rdr.headers()?);
    let key = KeyColumns::require(&cols)?;
    let date = cols.require("date")?;
    let clicks = cols.require("sum_click")?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let sum_click = csvio::parse_i64(T, "sum_click", line, &rec[clicks])?;
        if sum_click < 0 {
            return Err(Error::schema(T, format!("line {line}: negative sum_click")));
        }
        out.push(VleRow {
            key: key.key(T, line, &rec)?,
            date: csvio::parse_i64(T, "date", line, &rec[date])?,
            sum_click: sum_click as u64,
        });
    }
    Ok(out)
}

/// Reads submissions. When the submission table has no run columns, the
/// `assessments` table (`id_assessment → code_module, code_presentation`) is
/// used to attach them. Rows with an unparseable submission date are skipped.
pub fn read_submissions(path: &Path, assessments: Option<&Path>) -> Result<Vec<SubmissionRow>> {
    const T: &str = "studentAssessment";
    let mut rdr = csvio::open_reader(path)?;
    let cols = Columns::from_headers(T, rdr.headers()?);
    let submitted = cols.require("date_submitted")?;
    let direct = cols.optional("code_module").is_some() && cols.optional("code_presentation").is_some();
    let mut out = Vec::new();
    if direct {
        let key = KeyColumns::require(&cols)?;
        for rec in rdr.records() {
            let rec = rec?;
            let line = line_of(&rec);
            if let Some(d) = csvio::parse_opt_i64(&rec[submitted]) {
                out.push(SubmissionRow {
                    key: key.key(T, line, &rec)?,
                    date_submitted: d,
                });
            }
        }
        return Ok(out);
    }
    let id_assessment = cols.require("id_assessment")?;
    let id_student = cols.require("id_student")?;
    let apath = assessments.ok_or_else(|| {
        Error::schema(T, "no code_module/code_presentation columns and no assessments table to join")
    })?;
    let runs = read_assessment_runs(apath)?;
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let Some(d) = csvio::parse_opt_i64(&rec[submitted]) else {
            continue;
        };
        let aid = csvio::parse_i64(T, "id_assessment", line, &rec[id_assessment])?;
        let (m, p) = runs
            .get(&aid)
            .ok_or_else(|| Error::schema(T, format!("line {line}: id_assessment {aid} not in assessments")))?;
        out.push(SubmissionRow {
            key: EnrollmentKey {
                id_student: csvio::parse_i64(T, "id_student", line, &rec[id_student])?,
                code_module: m.clone(),
                code_presentation: p.clone(),
            },
            date_submitted: d,
        });
    }
    Ok(out)
}

fn read_assessment_runs(path: &Path) -> Result<HashMap<i64, (String, String)>> {
    const T: &str = "assessments";
    let mut rdr = csvio::open_reader(path)?;
    let cols = Columns::from_headers(T, rdr.headers()?);
    let id = cols.require("id_assessment")?;
    let m = cols.require("code_module")?;
    let p = cols.require("code_presentation")?;
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        out.insert(
            csvio::parse_i64(T, "id_assessment", line, &rec[id])?,
            (rec[m].trim().to_string(), rec[p].trim().to_string()),
        );
    }
    Ok(out)
}

/// Loads `studentInfo`, `studentRegistration`, `studentVle` and
/// `studentAssessment` (plus `assessments` when present) from `files`.
pub fn load_raw_tables(files: &DataFiles) -> Result<RawTables> {
    let student_info = read_student_info(&files.path("studentInfo"))?;
    let registrations = read_registrations(&files.path("studentRegistration"))?;
    let vle_clicks = read_vle(&files.path("studentVle"))?;
    let apath = files.path("assessments");
    let assessments = read_submissions(
        &files.path("studentAssessment"),
        apath.exists().then_some(apath.as_path()),
    )?;
    Ok(RawTables {
        student_info,
        registrations,
        vle_clicks,
        assessments,
    })
}

/// Primary endpoint for one enrollment.
///
/// `last_vle_day` is the latest VLE day observed for the enrollment, if any.
pub fn derive_endpoint(
    info: &StudentInfoRow,
    registration: Option<&RegistrationRow>,
    last_vle_day: Option<i64>,
) -> Enrollment {
    let date_unregistration = registration.and_then(|r| r.date_unregistration);
    let t_last_obs = last_vle_day.map(week_of_day).unwrap_or(0);
    let (event, t_event) = match (info.final_result, date_unregistration) {
        (FinalResult::Withdrawn, Some(d)) => (true, Some(week_of_day(d))),
        _ => (false, None),
    };
    let t_final = t_event.unwrap_or(t_last_obs);
    Enrollment {
        key: info.key.clone(),
        final_result: info.final_result,
        date_unregistration,
        event,
        t_event,
        t_last_obs,
        t_final,
        statics: info.statics.clone(),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BackboneReport {
    pub enrollments: Vec<Enrollment>,
    pub duplicate_student_info: usize,
    pub duplicate_registrations: usize,
    pub orphan_rows: usize,
    pub unique_students: usize,
    pub withdrawn_without_date: usize,
}

/// Deduplicated enrollments (first occurrence wins), sorted by key.
pub fn build_backbone(raw: &RawTables) -> Result<BackboneReport> {
    if raw.student_info.is_empty() {
        return Err(Error::EmptyInput("studentInfo has no rows".into()));
    }
    let mut seen = HashSet::new();
    let mut infos = Vec::new();
    let mut duplicate_student_info = 0;
    for row in &raw.student_info {
        if seen.insert(row.key.clone()) {
            infos.push(row);
        } else {
            duplicate_student_info += 1;
        }
    }

    let mut regs: HashMap<&EnrollmentKey, &RegistrationRow> = HashMap::new();
    let mut duplicate_registrations = 0;
    let mut orphan_rows = 0;
    for r in &raw.registrations {
        if !seen.contains(&r.key) {
            orphan_rows += 1;
        } else if regs.contains_key(&r.key) {
            duplicate_registrations += 1;
        } else {
            regs.insert(&r.key, r);
        }
    }

    let mut last_day: HashMap<&EnrollmentKey, i64> = HashMap::new();
    for v in &raw.vle_clicks {
        if !seen.contains(&v.key) {
            orphan_rows += 1;
            continue;
        }
        let e = last_day.entry(&v.key).or_insert(v.date);
        *e = (*e).max(v.date);
    }
    orphan_rows += raw
        .assessments
        .iter()
        .filter(|a| !seen.contains(&a.key))
        .count();

    let mut enrollments: Vec<Enrollment> = infos
        .iter()
        .map(|info| {
            derive_endpoint(
                info,
                regs.get(&info.key).copied(),
                last_day.get(&info.key).copied(),
            )
        })
        .collect();
    enrollments.sort_by(|a, b| a.key.cmp(&b.key));

    let unique_students = enrollments
        .iter()
        .map(|e| e.key.id_student)
        .collect::<BTreeSet<_>>()
        .len();
    let withdrawn_without_date = enrollments
        .iter()
        .filter(|e| e.final_result == FinalResult::Withdrawn && !e.event)
        .count();

    if duplicate_student_info > 0 {
        warn!("dropped {duplicate_student_info} duplicate studentInfo rows (first occurrence kept)");
    }
    if orphan_rows > 0 {
        warn!("dropped {orphan_rows} activity/registration rows without a studentInfo enrollment");
    }
    info!(
        "backbone: {} enrollments, {} students, {} events",
        enrollments.len(),
        unique_students,
        enrollments.iter().filter(|e| e.event).count()
    );
    Ok(BackboneReport {
        enrollments,
        duplicate_student_info,
        duplicate_registrations,
        orphan_rows,
        unique_students,
        withdrawn_without_date,
    })
}

/// Weekly click totals and submission weeks per enrollment, keyed by clamped
/// week index.
#[derive(Debug, Clone, Default)]
pub struct WeeklyActivity {
    pub clicks: BTreeMap<EnrollmentKey, BTreeMap<u32, f64>>,
    pub submissions: BTreeMap<EnrollmentKey, BTreeSet<u32>>,
}

impl WeeklyActivity {
    pub fn from_raw(raw: &RawTables) -> Self {
        let mut out = WeeklyActivity::default();
        for v in &raw.vle_clicks {
            *out.clicks
                .entry(v.key.clone())
                .or_default()
                .entry(week_of_day(v.date))
                .or_insert(0.0) += v.sum_click as f64;
        }
        for a in &raw.assessments {
            out.submissions
                .entry(a.key.clone())
                .or_default()
                .insert(week_of_day(a.date_submitted));
        }
        out
    }
}

const ENROLLMENT_HEADER: [&str; 14] = [
    "id_student",
    "code_module",
    "code_presentation",
    "gender",
    "highest_education",
    "age_band",
    "num_of_prev_attempts",
    "studied_credits",
    "final_result",
    "date_unregistration",
    "event",
    "t_event",
    "t_last_obs",
    "t_final",
];

pub fn write_enrollments(path: &Path, enrollments: &[Enrollment]) -> Result<()> {
    let mut w = TableWriter::create(path, &ENROLLMENT_HEADER)?;
    for e in enrollments {
        w.row([
            e.key.id_student.to_string(),
            e.key.code_module.clone(),
            e.key.code_presentation.clone(),
            e.statics.gender.clone(),
            e.statics.highest_education.clone(),
            e.statics.age_band.clone(),
            e.statics.num_of_prev_attempts.to_string(),
            e.statics.studied_credits.to_string(),
            e.final_result.as_str().to_string(),
            e.date_unregistration.map(|d| d.to_string()).unwrap_or_default(),
            u8::from(e.event).to_string(),
            e.t_event.map(|t| t.to_string()).unwrap_or_default(),
            e.t_last_obs.to_string(),
            e.t_final.to_string(),
        ])?;
    }
    w.finish()
}

pub fn read_enrollments(path: &Path) -> Result<Vec<Enrollment>> {
    const T: &str = "enrollments";
    let mut rdr = csvio::open_reader(path)?;
    let cols = Columns::from_headers(T, rdr.headers()?);
    let idx: Vec<usize> = ENROLLMENT_HEADER
        .iter()
        .map(|c| cols.require(c))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let get = |i: usize| &rec[idx[i]];
        let week = |i: usize| -> Result<u32> {
            csvio::parse_i64(T, ENROLLMENT_HEADER[i], line, get(i)).map(|v| v as u32)
        };
        out.push(Enrollment {
            key: EnrollmentKey {
                id_student: csvio::parse_i64(T, "id_student", line, get(0))?,
                code_module: get(1).to_string(),
                code_presentation: get(2).to_string(),
            },
            statics: Statics {
                gender: get(3).to_string(),
                highest_education: get(4).to_string(),
                age_band: get(5).to_string(),
                num_of_prev_attempts: csvio::parse_f64(T, "num_of_prev_attempts", line, get(6))?,
                studied_credits: csvio::parse_f64(T, "studied_credits", line, get(7))?,
            },
            final_result: get(8)
                .parse()
                .map_err(|e: String| Error::schema(T, format!("line {line}: {e}")))?,
            date_unregistration: csvio::parse_opt_i64(get(9)),
            event: get(10).trim() == "1",
            t_event: if get(11).trim().is_empty() { None } else { Some(week(11)?) },
            t_last_obs: week(12)?,
            t_final: week(13)?,
        });
    }
    Ok(out)
}
