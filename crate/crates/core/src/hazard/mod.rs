//! Discrete-time logistic hazard model with grouped out-of-fold sigmoid
//! calibration.

pub mod calibration;
pub mod codec;
pub mod features;
pub mod logistic;
pub mod survival;

use std::fs;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use calibration::{fit_platt, Platt};
pub use codec::{Design, FeatureCodec};
pub use features::{Feature, FeatureRow, FeatureSet, Variant};
pub use logistic::{fit_logistic, FitConfig, LogisticFit};
pub use survival::{survival_product, SurvivalCurve};

use crate::error::{Error, Result};
use crate::person_period::PersonPeriodTable;

pub const MODEL_FORMAT: &str = "weekhaz-hazard-model";
pub const MODEL_VERSION: u32 = 1;

/// What the weekly label marks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Event,
    Censoring,
}

/// Anything that maps a feature row to a weekly hazard in (0, 1).
pub trait HazardScorer: Sync {
    fn hazard(&self, row: &FeatureRow<'_>) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardModel {
    pub format: String,
    pub version: u32,
    pub target: Target,
    pub features: FeatureSet,
    pub codec: FeatureCodec,
    pub column_names: Vec<String>,
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub calib_a: f64,
    pub calib_b: f64,
    pub lambda: f64,
    pub class_weights: (f64, f64),
}

impl HazardScorer for HazardModel {
    fn hazard(&self, row: &FeatureRow<'_>) -> f64 {
        self.platt().apply(self.decision(row))
    }
}

impl HazardModel {
    pub fn platt(&self) -> Platt {
        Platt {
            a: self.calib_a,
            b: self.calib_b,
        }
    }

    /// Raw linear score `β₀ + βᵀx`.
    pub fn decision(&self, row: &FeatureRow<'_>) -> f64 {
        self.beta0 + self.codec.linear(row, &self.beta)
    }

    pub fn decisions(&self, table: &PersonPeriodTable) -> Vec<f64> {
        (0..table.n_rows())
            .into_par_iter()
            .map(|r| self.decision(&FeatureRow::from_table(table, r)))
            .collect()
    }

    /// Calibrated hazard for every row of `table`.
    pub fn predict_hazards(&self, table: &PersonPeriodTable) -> Vec<f64> {
        predict_hazards(self, table)
    }

    pub fn survival_curves(&self, table: &PersonPeriodTable) -> Vec<SurvivalCurve> {
        survival_curves(table, &self.predict_hazards(table))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: HazardModel = serde_json::from_str(&text)?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(Error::Schema {
                table: path.display().to_string(),
                detail: format!("unsupported model format {} v{}", m.format, m.version),
            });
        }
        if m.beta.len() != m.codec.dim() {
            return Err(Error::Schema {
                table: path.display().to_string(),
                detail: format!("{} coefficients for {} columns", m.beta.len(), m.codec.dim()),
            });
        }
        m.codec.rebuild_lookups();
        Ok(m)
    }
}

pub fn predict_hazards(scorer: &dyn HazardScorer, table: &PersonPeriodTable) -> Vec<f64> {
    (0..table.n_rows())
        .into_par_iter()
        .map(|r| scorer.hazard(&FeatureRow::from_table(table, r)))
        .collect()
}

/// One curve per enrollment from row-aligned hazards.
pub fn survival_curves(table: &PersonPeriodTable, hazards: &[f64]) -> Vec<SurvivalCurve> {
    table
        .enrollments
        .iter()
        .zip(&table.spans)
        .map(|(e, span)| SurvivalCurve::new(e.key.clone(), hazards[span.clone()].to_vec()))
        .collect()
}

/// Codec and logistic fit restricted to `rows` of `table`.
pub fn fit_base(
    table: &PersonPeriodTable,
    rows: &[usize],
    labels: &[bool],
    features: &FeatureSet,
    cfg: &FitConfig,
) -> Result<(FeatureCodec, LogisticFit)> {
    let codec = FeatureCodec::fit(features, rows.iter().map(|&r| FeatureRow::from_table(table, r)))?;
    let design = codec.encode(rows.iter().map(|&r| FeatureRow::from_table(table, r)));
    let y: Vec<bool> = rows.iter().map(|&r| labels[r]).collect();
    let fit = fit_logistic(&design, &y, cfg)?;
    Ok((codec, fit))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub folds_used: Vec<usize>,
    pub folds_skipped: Vec<usize>,
    pub oof_rows: usize,
    pub iterations: usize,
}

/// Cross-fitted calibration: per-fold base models score their held-out
/// fold, one sigmoid is fitted on the pooled out-of-fold scores, and the
/// final coefficients come from a refit on every row.
///
/// `folds[u]` is the fold of enrollment `u` of `table`; `labels` are per row.
pub fn fit_calibrated(
    table: &PersonPeriodTable,
    labels: &[bool],
    folds: &[usize],
    features: &FeatureSet,
    target: Target,
    cfg: &FitConfig,
) -> Result<(HazardModel, CalibrationReport)> {
    if labels.len() != table.n_rows() || folds.len() != table.n_enrollments() {
        return Err(Error::Contract("labels/folds not aligned with the table".into()));
    }
    if table.n_rows() == 0 {
        return Err(Error::EmptyInput("no training rows".into()));
    }
    let all: Vec<usize> = (0..table.n_rows()).collect();
    let (codec, fit) = fit_base(table, &all, labels, features, cfg)?;

    let k = folds.iter().copied().max().map_or(0, |m| m + 1);
    let fold_of_row = |r: usize| folds[table.unit[r] as usize];
    let per_fold: Vec<(usize, Option<(Vec<f64>, Vec<bool>)>)> = (0..k)
        .into_par_iter()
        .map(|f| -> Result<_> {
            let train: Vec<usize> = all.iter().copied().filter(|&r| fold_of_row(r) != f).collect();
            let held: Vec<usize> = all.iter().copied().filter(|&r| fold_of_row(r) == f).collect();
            let single = |rows: &[usize]| {
                let pos = rows.iter().filter(|&&r| labels[r]).count();
                pos == 0 || pos == rows.len()
            };
            if train.is_empty() || held.is_empty() || single(&train) || single(&held) {
                return Ok((f, None));
            }
            let (c, lf) = fit_base(table, &train, labels, features, cfg)?;
            let scores = held
                .iter()
                .map(|&r| lf.beta0 + c.linear(&FeatureRow::from_table(table, r), &lf.beta))
                .collect();
            Ok((f, Some((scores, held.iter().map(|&r| labels[r]).collect()))))
        })
        .collect::<Result<_>>()?;

    let mut report = CalibrationReport {
        folds_used: vec![],
        folds_skipped: vec![],
        oof_rows: 0,
        iterations: fit.iterations,
    };
    let mut scores = Vec::new();
    let mut ys = Vec::new();
    for (f, part) in per_fold {
        match part {
            Some((s, y)) => {
                report.folds_used.push(f);
                scores.extend(s);
                ys.extend(y);
            }
            None => {
                warn!("calibration fold {f} has a single class; skipped");
                report.folds_skipped.push(f);
            }
        }
    }
    if report.folds_used.is_empty() {
        return Err(Error::Calibration("every calibration fold is degenerate".into()));
    }
    report.oof_rows = scores.len();
    let platt = fit_platt(&scores, &ys)?;
    info!(
        "{target:?} model: {} columns, {} newton iterations, sigmoid a={:.4} b={:.4}",
        codec.dim(),
        fit.iterations,
        platt.a,
        platt.b
    );
    Ok((
        HazardModel {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            target,
            features: features.clone(),
            column_names: codec.column_names(),
            codec,
            beta0: fit.beta0,
            beta: fit.beta,
            calib_a: platt.a,
            calib_b: platt.b,
            lambda: cfg.lambda,
            class_weights: fit.class_weights,
        },
        report,
    ))
}

/// Primary event model for one feature variant.
pub fn fit_event_model(
    train: &PersonPeriodTable,
    folds: &[usize],
    variant: Variant,
    cfg: &FitConfig,
) -> Result<(HazardModel, CalibrationReport)> {
    fit_calibrated(train, &train.event, folds, &variant.features(), Target::Event, cfg)
}

/// Fold index per train enrollment; missing folds are an error.
pub fn require_folds(folds: &[Option<usize>]) -> Result<Vec<usize>> {
    folds
        .iter()
        .map(|f| f.ok_or_else(|| Error::Contract("train enrollment without a fold".into())))
        .collect()
}
