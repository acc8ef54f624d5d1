//! Conditional censoring model, censoring survival `Ĝ`, truncated IPCW
//! weights and the censoring-valid evaluation horizon.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hazard::{
    fit_calibrated, predict_hazards, survival_curves, FeatureRow, FeatureSet, FitConfig,
    HazardModel, HazardScorer, SurvivalCurve, Target,
};
use crate::metrics::auc;
use crate::person_period::PersonPeriodTable;

/// Row label of the censoring process: the terminal week of a non-event
/// enrollment. Event enrollments only contribute risk-set rows.
pub fn censoring_labels(table: &PersonPeriodTable) -> Vec<bool> {
    (0..table.n_rows())
        .map(|r| {
            let e = table.enrollment_of(r);
            !e.event && table.week[r] == e.t_final
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CensoringModel {
    Fitted { model: HazardModel },
    /// Training data without a single censoring event: `Ĝ ≡ 1`.
    NoCensoring,
}

impl HazardScorer for CensoringModel {
    fn hazard(&self, row: &FeatureRow<'_>) -> f64 {
        match self {
            CensoringModel::Fitted { model } => model.hazard(row),
            CensoringModel::NoCensoring => 0.0,
        }
    }
}

impl CensoringModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: CensoringModel = serde_json::from_str(&text)?;
        if let CensoringModel::Fitted { model } = &mut m {
            model.codec.rebuild_lookups();
        }
        Ok(m)
    }
}

pub fn fit_censoring(
    train: &PersonPeriodTable,
    folds: &[usize],
    cfg: &FitConfig,
) -> Result<CensoringModel> {
    let labels = censoring_labels(train);
    let n_cens = labels.iter().filter(|&&c| c).count();
    if n_cens == 0 {
        info!("no censoring events in training data; G = 1");
        return Ok(CensoringModel::NoCensoring);
    }
    let (model, _) = fit_calibrated(train, &labels, folds, &FeatureSet::full(), Target::Censoring, cfg)?;
    Ok(CensoringModel::Fitted { model })
}

/// Per-enrollment censoring survival `Ĝᵢ(t) = Π_{k≤t}(1 − ĝᵢₖ)`.
pub fn censoring_curves(model: &CensoringModel, table: &PersonPeriodTable) -> Vec<SurvivalCurve> {
    survival_curves(table, &predict_hazards(model, table))
}

/// Marginal censoring survival over `table`: `Ĝ(t) = Π_{k≤t}(1 − ḡₖ)` with
/// `ḡₖ` the mean censoring hazard of rows at week `k`. The left limit
/// `Ĝ(0−)` is 1.
pub fn marginal_curve(table: &PersonPeriodTable, hazards: &[f64]) -> Vec<f64> {
    let max_week = table.week.iter().copied().max().map_or(0, |w| w as usize + 1);
    let mut sum = vec![0.0; max_week];
    let mut cnt = vec![0usize; max_week];
    for (r, &h) in hazards.iter().enumerate() {
        let t = table.week[r] as usize;
        sum[t] += h;
        cnt[t] += 1;
    }
    let mut g = 1.0;
    sum.iter()
        .zip(&cnt)
        .map(|(&s, &c)| {
            if c > 0 {
                g *= 1.0 - s / c as f64;
            }
            g
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weight {
    pub w: f64,
    pub floored: bool,
    pub capped: bool,
}

/// `min(1 / max(Ĝ, g_min), cap)`; the cap flag is set whenever the weight
/// sits at the cap.
pub fn ipcw_weight(g: f64, g_min: f64, cap: f64) -> Weight {
    let floored = g < g_min;
    let raw = 1.0 / g.max(g_min);
    Weight {
        w: raw.min(cap),
        floored,
        capped: raw >= cap,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct WeightStats {
    pub n: usize,
    pub floored: usize,
    pub capped: usize,
    pub mean: f64,
    pub max: f64,
}

impl WeightStats {
    pub fn capped_share(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.capped as f64 / self.n as f64
        }
    }

    pub fn floored_share(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.floored as f64 / self.n as f64
        }
    }
}

/// Row-level weights `w_it` from per-row `Ĝᵢ(t)`.
pub fn row_weight_stats(g_rows: &[f64], g_min: f64, cap: f64) -> WeightStats {
    let mut s = WeightStats {
        n: g_rows.len(),
        ..Default::default()
    };
    let mut total = 0.0;
    for &g in g_rows {
        let w = ipcw_weight(g, g_min, cap);
        total += w.w;
        s.max = s.max.max(w.w);
        s.floored += usize::from(w.floored);
        s.capped += usize::from(w.capped);
    }
    if s.n > 0 {
        s.mean = total / s.n as f64;
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonConfig {
    pub t_policy: u32,
    pub t_eval_policy: u32,
    pub t_eval_metrics: u32,
    pub g_min: f64,
    pub weight_cap: f64,
}

/// `T_eval_metrics = max{t : Ĝ(t) ≥ g_min}`, not beyond `T_eval_policy`.
pub fn compute_horizons(
    g: &[f64],
    g_min: f64,
    t_policy: u32,
    t_eval_policy: u32,
    weight_cap: f64,
) -> Result<HorizonConfig> {
    if !(g_min > 0.0 && g_min < 1.0) {
        return Err(Error::Argument(format!("g_min must lie in (0, 1), got {g_min}")));
    }
    if t_policy > t_eval_policy {
        return Err(Error::Argument(format!(
            "T_policy {t_policy} exceeds T_eval_policy {t_eval_policy}"
        )));
    }
    match g.first() {
        None => return Err(Error::EmptyInput("empty censoring survival curve".into())),
        Some(&g0) if g0 < g_min => {
            return Err(Error::DegenerateSupport(format!("G(0) = {g0} is below g_min = {g_min}")))
        }
        _ => {}
    }
    let last = g.iter().rposition(|&x| x >= g_min).unwrap_or(0) as u32;
    let t_eval_metrics = last.min(t_eval_policy);
    if t_eval_metrics < t_policy {
        warn!("T_eval_metrics {t_eval_metrics} is below T_policy {t_policy}");
    }
    Ok(HorizonConfig {
        t_policy,
        t_eval_policy,
        t_eval_metrics,
        g_min,
        weight_cap,
    })
}

/// Observation-end anchor for non-event enrollments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorVariant {
    LastObs,
    LastObsMinus1,
    LastObsMinus2,
}

impl AnchorVariant {
    pub const ALL: [AnchorVariant; 3] = [
        AnchorVariant::LastObs,
        AnchorVariant::LastObsMinus1,
        AnchorVariant::LastObsMinus2,
    ];

    pub fn trim(self) -> u32 {
        match self {
            AnchorVariant::LastObs => 0,
            AnchorVariant::LastObsMinus1 => 1,
            AnchorVariant::LastObsMinus2 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AnchorVariant::LastObs => "last_obs",
            AnchorVariant::LastObsMinus1 => "last_obs_minus_1",
            AnchorVariant::LastObsMinus2 => "last_obs_minus_2",
        }
    }
}

impl fmt::Display for AnchorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnchorVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last_obs" | "current" | "trim0" => Ok(AnchorVariant::LastObs),
            "last_obs_minus_1" | "trim1" => Ok(AnchorVariant::LastObsMinus1),
            "last_obs_minus_2" | "trim2" => Ok(AnchorVariant::LastObsMinus2),
            _ => Err(Error::Argument(format!("unknown anchor variant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorRow {
    pub variant: AnchorVariant,
    pub trim_weeks: u32,
    pub train_censoring_events: usize,
    pub test_censoring_events: usize,
    /// Row-level AUC of the censoring hazard on test rows; `None` when
    /// undefined (single class).
    pub test_auc: Option<f64>,
    pub test_rows: usize,
    pub capped_share: f64,
    pub floored_share: f64,
    pub g_at_t_policy: f64,
    pub t_eval_metrics: Option<u32>,
}

/// Refits the censoring model under a trimmed non-event anchor and reports
/// its diagnostics on the equally trimmed test rows.
pub fn anchor_sensitivity(
    train: &PersonPeriodTable,
    test: &PersonPeriodTable,
    folds: &[usize],
    variant: AnchorVariant,
    cfg: &FitConfig,
    horizons: &HorizonConfig,
) -> Result<AnchorRow> {
    let train = train.trim_non_event_anchor(variant.trim());
    let test = test.trim_non_event_anchor(variant.trim());
    let model = fit_censoring(&train, folds, cfg)?;
    let test_labels = censoring_labels(&test);
    let hz = predict_hazards(&model, &test);
    let curves = survival_curves(&test, &hz);
    let g_rows: Vec<f64> = curves.iter().flat_map(|c| c.survival.iter().copied()).collect();
    let stats = row_weight_stats(&g_rows, horizons.g_min, horizons.weight_cap);
    let marginal = marginal_curve(&test, &hz);
    let g_at = |t: u32| match marginal.len() {
        0 => 1.0,
        n => marginal[(t as usize).min(n - 1)],
    };
    let t_eval_metrics = compute_horizons(
        &marginal,
        horizons.g_min,
        horizons.t_policy,
        horizons.t_eval_policy,
        horizons.weight_cap,
    )
    .ok()
    .map(|h| h.t_eval_metrics);
    Ok(AnchorRow {
        variant,
        trim_weeks: variant.trim(),
        train_censoring_events: censoring_labels(&train).iter().filter(|&&c| c).count(),
        test_censoring_events: test_labels.iter().filter(|&&c| c).count(),
        test_auc: auc(&hz, &test_labels).ok(),
        test_rows: test.n_rows(),
        capped_share: stats.capped_share(),
        floored_share: stats.floored_share(),
        g_at_t_policy: g_at(horizons.t_policy),
        t_eval_metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::person_period::tests::enrollment;
    use crate::person_period::{expand, PersonPeriodTable};

    #[test]
    fn weight_examples() {
        assert_eq!(ipcw_weight(0.5, 0.05, 20.0).w, 2.0);
        let w = ipcw_weight(0.01, 0.05, 20.0);
        assert_eq!(w.w, 20.0);
        assert!(w.floored && w.capped);
        assert_eq!(ipcw_weight(1.0, 0.05, 20.0).w, 1.0);
    }

    #[test]
    fn horizon_examples() {
        let h = compute_horizons(&[1.0; 11], 0.05, 5, 38, 20.0).unwrap();
        assert_eq!(h.t_eval_metrics, 10);
        let h = compute_horizons(&[1.0, 0.04], 0.05, 0, 38, 20.0).unwrap();
        assert_eq!(h.t_eval_metrics, 0);
        let err = compute_horizons(&[0.01, 0.0], 0.05, 0, 38, 20.0).unwrap_err();
        assert_eq!(err.code(), "E_DEGENERATE_SUPPORT");
    }

    #[test]
    fn labels_mark_terminal_non_event_week() {
        let a = enrollment(1, false, 2);
        let b = enrollment(2, true, 1);
        let table = PersonPeriodTable::from_rows(vec![
            (a.clone(), expand(&a, None, None)),
            (b.clone(), expand(&b, None, None)),
        ]);
        assert_eq!(censoring_labels(&table), vec![false, false, true, false, false]);
        for (c, e) in censoring_labels(&table).iter().zip(&table.event) {
            assert!(!(*c && *e));
        }
    }

    #[test]
    fn no_censoring_gives_unit_curve() {
        let units: Vec<_> = (0..4)
            .map(|i| {
                let e = enrollment(i, true, 3);
                let rows = expand(&e, None, None);
                (e, rows)
            })
            .collect();
        let table = PersonPeriodTable::from_rows(units);
        let m = fit_censoring(&table, &[0, 1, 0, 1], &FitConfig::default()).unwrap();
        assert_eq!(m, CensoringModel::NoCensoring);
        let hz = predict_hazards(&m, &table);
        assert!(marginal_curve(&table, &hz).iter().all(|&g| g == 1.0));
        assert!(censoring_curves(&m, &table)
            .iter()
            .all(|c| c.survival.iter().all(|&g| g == 1.0)));
    }

    #[test]
    fn marginal_uses_week_means() {
        let a = enrollment(1, false, 1);
        let b = enrollment(2, false, 0);
        let table = PersonPeriodTable::from_rows(vec![
            (a.clone(), expand(&a, None, None)),
            (b.clone(), expand(&b, None, None)),
        ]);
        // rows: a@0, a@1, b@0
        let g = marginal_curve(&table, &[0.1, 0.5, 0.3]);
        assert!((g[0] - 0.8).abs() < 1e-15);
        assert!((g[1] - 0.4).abs() < 1e-15);
    }
}
