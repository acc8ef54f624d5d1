use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::csvio::{self, Columns, TableWriter};
use crate::error::{Error, Result};
use crate::ingestion::EnrollmentKey;

pub const HAZARD_CLAMP: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub key: EnrollmentKey,
    pub hazards: Vec<f64>,
    pub survival: Vec<f64>,
}

impl SurvivalCurve {
    pub fn new(key: EnrollmentKey, hazards: Vec<f64>) -> Self {
        let survival = survival_product(&hazards);
        SurvivalCurve {
            key,
            hazards,
            survival,
        }
    }

    /// `Ŝ(t)`, carried forward past the last observed week; 1 for an empty curve.
    pub fn at(&self, t: u32) -> f64 {
        match self.survival.len() {
            0 => 1.0,
            n => self.survival[(t as usize).min(n - 1)],
        }
    }
}

/// `S(t) = Π_{k≤t}(1 − h_k)` with hazards clamped below 1.
pub fn survival_product(hazards: &[f64]) -> Vec<f64> {
    let mut s = 1.0;
    let mut clamped = 0usize;
    let out = hazards
        .iter()
        .map(|&h| {
            let h = if h > HAZARD_CLAMP {
                clamped += 1;
                HAZARD_CLAMP
            } else {
                h.max(0.0)
            };
            s *= 1.0 - h;
            s
        })
        .collect();
    if clamped > 0 {
        warn!("clamped {clamped} hazards at 1 - 1e-12");
    }
    out
}

const CURVE_HEADER: [&str; 6] = ["id_student", "code_module", "code_presentation", "week", "hazard", "survival"];

/// Long format, one row per enrollment-week.
pub fn write_curves(path: &Path, curves: &[SurvivalCurve]) -> Result<()> {
    let mut w = TableWriter::create(path, &CURVE_HEADER)?;
    for c in curves {
        let id = c.key.id_student.to_string();
        for (t, (h, s)) in c.hazards.iter().zip(&c.survival).enumerate() {
            w.row([
                id.clone(),
                c.key.code_module.clone(),
                c.key.code_presentation.clone(),
                t.to_string(),
                csvio::fmt_f64(*h),
                csvio::fmt_f64(*s),
            ])?;
        }
    }
    w.finish()
}

/// Reads curves written by [`write_curves`]; survival is recomputed from the
/// stored hazards so it is bit-identical to the producer.
pub fn read_curves(path: &Path) -> Result<Vec<SurvivalCurve>> {
    let table = path.display().to_string();
    let mut rdr = csvio::open_reader(path)?;
    let cols = Columns::from_headers(&table, rdr.headers()?);
    let (ci, cm, cp, cw, ch) = (
        cols.require("id_student")?,
        cols.require("code_module")?,
        cols.require("code_presentation")?,
        cols.require("week")?,
        cols.require("hazard")?,
    );
    let mut out: Vec<(EnrollmentKey, Vec<f64>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let key = EnrollmentKey::new(
            csvio::parse_i64(&table, "id_student", line, &rec[ci])?,
            &rec[cm],
            &rec[cp],
        );
        let week = csvio::parse_i64(&table, "week", line, &rec[cw])?;
        let h = csvio::parse_f64(&table, "hazard", line, &rec[ch])?;
        match out.last_mut() {
            Some((k, hs)) if *k == key => {
                if week as usize != hs.len() {
                    return Err(Error::schema(&table, format!("line {line}: weeks not contiguous")));
                }
                hs.push(h);
            }
            _ => {
                if week != 0 {
                    return Err(Error::schema(&table, format!("line {line}: curve does not start at week 0")));
                }
                out.push((key, vec![h]));
            }
        }
    }
    Ok(out.into_iter().map(|(k, h)| SurvivalCurve::new(k, h)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_product() {
        let s = survival_product(&[0.1, 0.2]);
        assert!((s[0] - 0.9).abs() < 1e-15 && (s[1] - 0.72).abs() < 1e-15);
        assert_eq!(survival_product(&[0.0; 4]), vec![1.0; 4]);
    }

    #[test]
    fn week_zero_included() {
        let s = survival_product(&[0.05; 19]);
        assert!((s[18] - 0.95f64.powi(19)).abs() < 1e-12);
        assert!((s[18] - 0.3774).abs() < 1e-4);
    }

    #[test]
    fn curve_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let curves = vec![
            SurvivalCurve::new(EnrollmentKey::new(1, "A", "B"), vec![0.1, 0.123456789]),
            SurvivalCurve::new(EnrollmentKey::new(2, "A", "B"), vec![0.3]),
        ];
        write_curves(&p, &curves).unwrap();
        assert_eq!(read_curves(&p).unwrap(), curves);
    }

    #[test]
    fn unit_hazard_clamped_positive() {
        let s = survival_product(&[1.0, 0.5]);
        assert!(s[1] > 0.0);
    }
}
