//! Test-set evaluation: row-level metrics, censoring-weighted horizon
//! metrics, endpoint sensitivity, ablation and held-out-run battery, and
//! the corresponding tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use crate::censoring::{AnchorRow, HorizonConfig};
use crate::csvio::{fmt_f64, fmt_opt_f64, TableWriter};
use crate::endpoint::Endpoint;
use crate::error::{Error, Result};
use crate::hazard::{fit_event_model, require_folds, FitConfig, HazardModel, SurvivalCurve, Variant};
use crate::ingestion::EnrollmentKey;
use crate::metrics::{
    auc, brier_curve, brier_ipcw, brier_rows, by_group_diagnostics, cindex, cindex_td, ece, horizon_labels, ibs, Brier,
    Concordance, GroupDiagnostics, HorizonStatus, Outcome,
};
use crate::person_period::PersonPeriodTable;
use crate::splitting::{assign_folds, holdout_run_split, partition_table};

pub const ECE_BINS: usize = 15;

/// Test-side inputs shared by every horizon metric.
pub struct EvalContext<'a> {
    pub test: &'a PersonPeriodTable,
    pub curves: &'a [SurvivalCurve],
    /// Per-enrollment censoring survival `Ĝᵢ`.
    pub g_curves: &'a [SurvivalCurve],
    pub horizons: &'a HorizonConfig,
}

impl EvalContext<'_> {
    fn keys(&self) -> Vec<EnrollmentKey> {
        self.test.enrollments.iter().map(|e| e.key.clone()).collect()
    }

    pub fn outcomes(&self, endpoint: Endpoint) -> Vec<Outcome> {
        self.test.enrollments.iter().map(|e| endpoint.outcome(e)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonMetrics {
    pub endpoint: Endpoint,
    pub horizon: String,
    pub week: u32,
    pub n_enrollments: usize,
    /// Events under the endpoint, at any week.
    pub n_events: usize,
    pub n_event_by_horizon: usize,
    pub n_event_free: usize,
    pub n_censored_before: usize,
    pub brier: Brier,
    pub ibs: f64,
    pub concordance: Option<Concordance>,
    /// Pairs scored on `Ŝ` at the event week.
    pub concordance_td: Option<Concordance>,
    pub capped_share: f64,
}

pub fn horizon_metrics(ctx: &EvalContext<'_>, endpoint: Endpoint, name: &str, t: u32) -> Result<HorizonMetrics> {
    let keys = ctx.keys();
    let outcomes = ctx.outcomes(endpoint);
    let h = ctx.horizons;
    let labels = horizon_labels(&keys, &outcomes, ctx.curves, ctx.g_curves, t, h.g_min, h.weight_cap)?;
    let brier = brier_ipcw(&labels)?;
    let curve = brier_curve(&keys, &outcomes, ctx.curves, ctx.g_curves, t, h.g_min, h.weight_cap)?;
    let risk: Vec<f64> = labels.iter().map(|l| l.p).collect();
    let weights: Vec<f64> = labels.iter().map(|l| if l.y { l.w } else { 1.0 }).collect();
    let concordance = cindex(&risk, &outcomes, &weights, t).ok();
    let concordance_td = cindex_td(ctx.curves, &outcomes, &weights, t).ok();
    let count = |s: HorizonStatus| labels.iter().filter(|l| l.status == s).count();
    let weighted = labels.iter().filter(|l| l.w > 0.0).count();
    Ok(HorizonMetrics {
        endpoint,
        horizon: name.into(),
        week: t,
        n_enrollments: labels.len(),
        n_events: outcomes.iter().filter(|o| o.event).count(),
        n_event_by_horizon: count(HorizonStatus::EventByHorizon),
        n_event_free: count(HorizonStatus::EventFreeThroughHorizon),
        n_censored_before: count(HorizonStatus::CensoredByHorizon),
        brier,
        ibs: ibs(&curve),
        concordance,
        concordance_td,
        capped_share: if weighted == 0 {
            0.0
        } else {
            labels.iter().filter(|l| l.capped).count() as f64 / weighted as f64
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowMetrics {
    pub partition: String,
    pub n_rows: usize,
    pub n_events: usize,
    pub auc: Option<f64>,
    pub brier: f64,
    pub ece: f64,
    pub mean_hazard: f64,
    pub event_rate: f64,
}

pub fn row_metrics(partition: &str, hazards: &[f64], labels: &[bool]) -> RowMetrics {
    let n = hazards.len().max(1) as f64;
    let n_events = labels.iter().filter(|&&y| y).count();
    RowMetrics {
        partition: partition.into(),
        n_rows: hazards.len(),
        n_events,
        auc: auc(hazards, labels).ok(),
        brier: brier_rows(hazards, labels),
        ece: ece(hazards, labels, ECE_BINS),
        mean_hazard: hazards.iter().sum::<f64>() / n,
        event_rate: n_events as f64 / n,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationBin {
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub events: usize,
    pub mean_predicted: Option<f64>,
    pub event_rate: Option<f64>,
}

pub fn calibration_bins(hazards: &[f64], labels: &[bool], bins: usize) -> Vec<CalibrationBin> {
    let mut out: Vec<CalibrationBin> = (0..bins)
        .map(|b| CalibrationBin {
            bin: b,
            lower: b as f64 / bins as f64,
            upper: (b + 1) as f64 / bins as f64,
            n: 0,
            events: 0,
            mean_predicted: None,
            event_rate: None,
        })
        .collect();
    let mut sums = vec![0.0; bins];
    for (&p, &y) in hazards.iter().zip(labels) {
        let b = ((p * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        out[b].n += 1;
        out[b].events += usize::from(y);
        sums[b] += p;
    }
    for (b, s) in out.iter_mut().zip(sums) {
        if b.n > 0 {
            b.mean_predicted = Some(s / b.n as f64);
            b.event_rate = Some(b.events as f64 / b.n as f64);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub n_columns: usize,
    pub auc_row_test: Option<f64>,
    pub week: u32,
    pub cindex: Option<f64>,
    pub cindex_td: Option<f64>,
    pub brier: f64,
    pub ibs: f64,
}

/// Refits every variant under the same protocol and scores it at
/// `T_eval_metrics` with the shared censoring weights.
pub fn ablation(
    train: &PersonPeriodTable,
    folds: &[usize],
    test: &PersonPeriodTable,
    g_curves: &[SurvivalCurve],
    horizons: &HorizonConfig,
    cfg: &FitConfig,
) -> Result<Vec<AblationRow>> {
    Variant::ALL
        .iter()
        .map(|&v| {
            let (model, _) = fit_event_model(train, folds, v, cfg)?;
            let hz = model.predict_hazards(test);
            let curves = crate::hazard::survival_curves(test, &hz);
            let ctx = EvalContext {
                test,
                curves: &curves,
                g_curves,
                horizons,
            };
            let t = horizons.t_eval_metrics;
            let m = horizon_metrics(&ctx, Endpoint::Primary, "T_eval_metrics", t)?;
            info!("ablation {}: {} columns", v.name(), model.codec.dim());
            Ok(AblationRow {
                variant: v,
                n_columns: model.codec.dim(),
                auc_row_test: auc(&hz, &test.event).ok(),
                week: t,
                cindex: m.concordance.map(|c| c.cindex),
                cindex_td: m.concordance_td.map(|c| c.cindex),
                brier: m.brier.per_n,
                ibs: m.ibs,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoldoutRow {
    pub code_module: String,
    pub code_presentation: String,
    pub rows: usize,
    pub pos_rate: f64,
    pub auc_row: Option<f64>,
    pub enrollments: usize,
    pub events: usize,
}

/// Runs with the most enrollments, largest first; ties by run name.
pub fn largest_runs(table: &PersonPeriodTable, n: usize) -> Vec<(String, String)> {
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    for e in &table.enrollments {
        *counts.entry(e.key.run()).or_default() += 1;
    }
    let mut runs: Vec<_> = counts.into_iter().collect();
    runs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    runs.into_iter().take(n).map(|(r, _)| r).collect()
}

/// Leave-one-run-out: each run is held out whole, the full model is
/// trained on the rest and scored on the held-out rows.
pub fn holdout_runs(
    table: &PersonPeriodTable,
    runs: &[(String, String)],
    k: usize,
    seed: u64,
    cfg: &FitConfig,
) -> Result<Vec<HoldoutRow>> {
    runs.iter()
        .map(|(m, p)| {
            let mut split = holdout_run_split(&table.enrollments, m, p)?;
            assign_folds(&mut split, k, seed)?;
            let parts = partition_table(table, &split)?;
            let folds = require_folds(&parts.train_folds)?;
            let (model, _) = fit_event_model(&parts.train, &folds, Variant::Full, cfg)?;
            let hz = model.predict_hazards(&parts.test);
            let rows = parts.test.n_rows();
            let events = parts.test.n_events();
            Ok(HoldoutRow {
                code_module: m.clone(),
                code_presentation: p.clone(),
                rows,
                pos_rate: events as f64 / rows.max(1) as f64,
                auc_row: auc(&hz, &parts.test.event).ok(),
                enrollments: parts.test.n_enrollments(),
                events,
            })
        })
        .collect()
}

/// Risk scores supplied from outside (for model families not fitted here).
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalScores {
    pub model: String,
    pub week: u32,
    pub risk: BTreeMap<EnrollmentKey, f64>,
}

/// Reads `model, id_student, code_module, code_presentation, week, risk`.
pub fn read_external_scores(path: &Path) -> Result<Vec<ExternalScores>> {
    let table = path.display().to_string();
    let mut rdr = crate::csvio::open_reader(path)?;
    let cols = crate::csvio::Columns::from_headers(&table, rdr.headers()?);
    let idx: Vec<usize> = ["model", "id_student", "code_module", "code_presentation", "week", "risk"]
        .iter()
        .map(|c| cols.require(c))
        .collect::<Result<_>>()?;
    let mut by: BTreeMap<(String, u32), BTreeMap<EnrollmentKey, f64>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let key = EnrollmentKey::new(
            crate::csvio::parse_i64(&table, "id_student", line, &rec[idx[1]])?,
            rec[idx[2]].trim(),
            rec[idx[3]].trim(),
        );
        let week = crate::csvio::parse_i64(&table, "week", line, &rec[idx[4]])?;
        let risk = crate::csvio::parse_f64(&table, "risk", line, &rec[idx[5]])?;
        by.entry((rec[idx[0]].trim().to_string(), week as u32))
            .or_default()
            .insert(key, risk);
    }
    Ok(by
        .into_iter()
        .map(|((model, week), risk)| ExternalScores { model, week, risk })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExternalRow {
    pub model: String,
    pub week: u32,
    pub cindex: Option<f64>,
    pub brier: f64,
}

/// Scores external risks at their week with the shared labels and weights.
pub fn evaluate_external(ctx: &EvalContext<'_>, scores: &ExternalScores) -> Result<ExternalRow> {
    let keys = ctx.keys();
    let outcomes = ctx.outcomes(Endpoint::Primary);
    let h = ctx.horizons;
    let labels = horizon_labels(&keys, &outcomes, ctx.curves, ctx.g_curves, scores.week, h.g_min, h.weight_cap)?;
    let risk: Vec<f64> = keys
        .iter()
        .map(|k| {
            scores
                .risk
                .get(k)
                .copied()
                .ok_or_else(|| Error::Contract(format!("external model `{}` has no score for {k}", scores.model)))
        })
        .collect::<Result<_>>()?;
    let relabelled: Vec<_> = labels
        .iter()
        .zip(&risk)
        .map(|(l, &p)| crate::metrics::HorizonLabel { p, ..l.clone() })
        .collect();
    let weights: Vec<f64> = labels.iter().map(|l| if l.y { l.w } else { 1.0 }).collect();
    Ok(ExternalRow {
        model: scores.model.clone(),
        week: scores.week,
        cindex: cindex(&risk, &outcomes, &weights, scores.week).ok().map(|c| c.cindex),
        brier: brier_ipcw(&relabelled)?.per_n,
    })
}

/// Everything the evaluate stage exports.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub rows: Vec<RowMetrics>,
    pub horizons: Vec<HorizonMetrics>,
    pub endpoints: Vec<HorizonMetrics>,
    pub calibration: Vec<CalibrationBin>,
    pub group_column: String,
    pub by_group: Vec<GroupDiagnostics>,
    pub ablation: Vec<AblationRow>,
    pub holdout: Vec<HoldoutRow>,
    pub external: Vec<ExternalRow>,
}

/// Per-horizon metrics for `T_policy` and `T_eval_metrics`.
pub fn standard_horizons(ctx: &EvalContext<'_>, endpoint: Endpoint) -> Result<Vec<HorizonMetrics>> {
    let h = ctx.horizons;
    [("T_policy", h.t_policy), ("T_eval_metrics", h.t_eval_metrics)]
        .iter()
        .map(|&(n, t)| horizon_metrics(ctx, endpoint, n, t))
        .collect()
}

pub fn endpoint_rows(ctx: &EvalContext<'_>, endpoints: &[Endpoint]) -> Result<Vec<HorizonMetrics>> {
    endpoints
        .iter()
        .map(|&e| horizon_metrics(ctx, e, "T_eval_metrics", ctx.horizons.t_eval_metrics))
        .collect()
}

pub fn group_labels<'a>(table: &'a PersonPeriodTable, column: &str) -> Result<Vec<&'a str>> {
    (0..table.n_rows())
        .map(|r| {
            let e = table.enrollment_of(r);
            e.statics
                .categorical(&e.key, column)
                .ok_or_else(|| Error::Argument(format!("`{column}` is not a categorical static column")))
        })
        .collect()
}

pub fn group_diagnostics(test: &PersonPeriodTable, hazards: &[f64], column: &str) -> Result<Vec<GroupDiagnostics>> {
    let groups = group_labels(test, column)?;
    Ok(by_group_diagnostics(hazards, &test.event, &groups))
}

pub fn model_summary_rows(model: &HazardModel) -> Vec<(String, f64)> {
    let mut rows = vec![("(intercept)".to_string(), model.beta0)];
    rows.extend(model.column_names.iter().cloned().zip(model.beta.iter().copied()));
    rows.push(("calib_a".into(), model.calib_a));
    rows.push(("calib_b".into(), model.calib_b));
    rows
}

pub const EVALUATION_TABLES: [&str; 8] = [
    "table_metrics_row_level.csv",
    "table_metrics_by_horizon.csv",
    "table_calibration_bins.csv",
    "table_by_group_diagnostics.csv",
    "table_endpoint_sensitivity.csv",
    "table_ablation.csv",
    "table_ood_holdout_runs.csv",
    "table_external_benchmark.csv",
];

fn opt_usize(x: Option<u64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn horizon_row(m: &HorizonMetrics, note: &str) -> Vec<String> {
    vec![
        m.endpoint.name().to_string(),
        m.horizon.clone(),
        m.week.to_string(),
        m.n_enrollments.to_string(),
        m.n_events.to_string(),
        m.n_event_by_horizon.to_string(),
        m.n_event_free.to_string(),
        m.n_censored_before.to_string(),
        fmt_f64(m.brier.per_n),
        fmt_f64(m.brier.per_weight),
        fmt_f64(m.ibs),
        fmt_opt_f64(m.concordance.map(|c| c.cindex)),
        opt_usize(m.concordance.map(|c| c.comparable_pairs)),
        fmt_opt_f64(m.concordance_td.map(|c| c.cindex)),
        fmt_f64(m.capped_share),
        note.to_string(),
    ]
}

const HORIZON_HEADER: [&str; 16] = [
    "endpoint",
    "horizon",
    "week",
    "n_enrollments",
    "n_events",
    "n_event_by_horizon",
    "n_event_free",
    "n_censored_before",
    "brier_ipcw_per_n",
    "brier_ipcw_per_weight",
    "ibs_ipcw",
    "cindex_discrete",
    "comparable_pairs",
    "cindex_td",
    "capped_weight_share",
    "note",
];

pub fn write_evaluation_tables(dir: &Path, r: &EvaluationReport) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();

    let p = dir.join(EVALUATION_TABLES[0]);
    let mut w = TableWriter::create(
        &p,
        &["partition", "n_rows", "n_events", "auc_row", "brier_row", "ece_15", "mean_hazard", "event_rate"],
    )?;
    for m in &r.rows {
        w.row([
            m.partition.clone(),
            m.n_rows.to_string(),
            m.n_events.to_string(),
            fmt_opt_f64(m.auc),
            fmt_f64(m.brier),
            fmt_f64(m.ece),
            fmt_f64(m.mean_hazard),
            fmt_f64(m.event_rate),
        ])?;
    }
    w.finish()?;
    written.push(p);

    let p = dir.join(EVALUATION_TABLES[1]);
    let mut w = TableWriter::create(&p, &HORIZON_HEADER)?;
    for m in &r.horizons {
        w.row(horizon_row(m, "graf weights; censored-before-horizon weight 0"))?;
    }
    w.finish()?;
    written.push(p);

    let p = dir.join(EVALUATION_TABLES[2]);
    let mut w = TableWriter::create(
        &p,
        &["bin", "lower", "upper", "n", "events", "non_events", "mean_predicted", "event_rate"],
    )?;
    for b in &r.calibration {
        w.row([
            b.bin.to_string(),
            fmt_f64(b.lower),
            fmt_f64(b.upper),
            b.n.to_string(),
            b.events.to_string(),
            (b.n - b.events).to_string(),
            fmt_opt_f64(b.mean_predicted),
            fmt_opt_f64(b.event_rate),
        ])?;
    }
    w.finish()?;
    written.push(p);

    let p = dir.join(EVALUATION_TABLES[3]);
    let mut w = TableWriter::create(
        &p,
        &["group_column", "group", "n_rows", "n_events", "auc_row", "brier_row_unweighted", "ece_15"],
    )?;
    for g in &r.by_group {
        w.row([
            r.group_column.clone(),
            g.group.clone(),
            g.n_rows.to_string(),
            g.n_events.to_string(),
            fmt_opt_f64(g.auc),
            fmt_f64(g.brier),
            fmt_f64(g.ece),
        ])?;
    }
    w.finish()?;
    written.push(p);

    let p = dir.join(EVALUATION_TABLES[4]);
    let mut header: Vec<&str> = HORIZON_HEADER.to_vec();
    header.insert(1, "definition");
    let mut w = TableWriter::create(&p, &header)?;
    for m in &r.endpoints {
        let mut row = horizon_row(
            m,
            "risk 1-S(T) and censoring weights reused from the primary run (no refit)",
        );
        row.insert(1, m.endpoint.definition().to_string());
        w.row(row)?;
    }
    w.finish()?;
    written.push(p);

    let p = dir.join(EVALUATION_TABLES[5]);
    let mut w = TableWriter::create(
        &p,
        &["variant", "n_columns", "auc_row_test", "week", "cindex_discrete", "cindex_td", "brier_ipcw", "ibs_ipcw"],
    )?;
    for a in &r.ablation {
        w.row([
            a.variant.name().to_string(),
            a.n_columns.to_string(),
            fmt_opt_f64(a.auc_row_test),
            a.week.to_string(),
            fmt_opt_f64(a.cindex),
            fmt_opt_f64(a.cindex_td),
            fmt_f64(a.brier),
            fmt_f64(a.ibs),
        ])?;
    }
    w.finish()?;
    written.push(p);

    let p = dir.join(EVALUATION_TABLES[6]);
    let mut w = TableWriter::create(
        &p,
        &["held_out_run", "rows", "pos_rate", "auc_row", "enrollments", "events"],
    )?;
    for h in &r.holdout {
        w.row([
            format!("{}-{}", h.code_module, h.code_presentation),
            h.rows.to_string(),
            fmt_f64(h.pos_rate),
            fmt_opt_f64(h.auc_row),
            h.enrollments.to_string(),
            h.events.to_string(),
        ])?;
    }
    w.finish()?;
    written.push(p);

    let p = dir.join(EVALUATION_TABLES[7]);
    let mut w = TableWriter::create(&p, &["model", "week", "cindex_discrete", "brier_ipcw"])?;
    for x in &r.external {
        w.row([x.model.clone(), x.week.to_string(), fmt_opt_f64(x.cindex), fmt_f64(x.brier)])?;
    }
    w.finish()?;
    written.push(p);

    Ok(written)
}

pub const ANCHOR_TABLE: &str = "table_censoring_anchor_sensitivity.csv";

pub fn write_anchor_table(dir: &Path, rows: &[AnchorRow]) -> Result<PathBuf> {
    let p = dir.join(ANCHOR_TABLE);
    let mut w = TableWriter::create(
        &p,
        &[
            "anchor_variant",
            "trim_weeks",
            "train_censoring_events",
            "test_censoring_events",
            "test_rows",
            "censoring_auc_test_row",
            "capped_weight_share_test",
            "floored_share_test",
            "G_marginal_T_policy",
            "T_eval_metrics",
            "note",
        ],
    )?;
    for a in rows {
        w.row([
            a.variant.name().to_string(),
            a.trim_weeks.to_string(),
            a.train_censoring_events.to_string(),
            a.test_censoring_events.to_string(),
            a.test_rows.to_string(),
            fmt_opt_f64(a.test_auc),
            fmt_f64(a.capped_share),
            fmt_f64(a.floored_share),
            fmt_f64(a.g_at_t_policy),
            a.t_eval_metrics.map(|t| t.to_string()).unwrap_or_default(),
            "row-level censoring-hazard AUC; capped share over per-row G_i(t)".to_string(),
        ])?;
    }
    w.finish()?;
    Ok(p)
}

pub const HORIZON_TABLE: &str = "table_horizon_diagnostics.csv";
pub const G_CURVE_TABLE: &str = "table_censoring_G_curve.csv";

/// Horizon summary plus the marginal and mean-conditional `Ĝ` curves.
pub fn write_censoring_tables(
    dir: &Path,
    horizons: &HorizonConfig,
    g_marginal: &[f64],
    g_curves: &[SurvivalCurve],
    weight_stats: &crate::censoring::WeightStats,
) -> Result<Vec<PathBuf>> {
    let g_at = |t: u32| match g_marginal.len() {
        0 => 1.0,
        n => g_marginal[(t as usize).min(n - 1)],
    };
    let p1 = dir.join(HORIZON_TABLE);
    let mut w = TableWriter::create(&p1, &["quantity", "value"])?;
    let rows: Vec<(String, String)> = vec![
        ("T_policy".into(), horizons.t_policy.to_string()),
        ("T_eval_metrics".into(), horizons.t_eval_metrics.to_string()),
        ("T_eval_policy".into(), horizons.t_eval_policy.to_string()),
        ("g_min".into(), fmt_f64(horizons.g_min)),
        ("weight_cap".into(), fmt_f64(horizons.weight_cap)),
        ("G_at_T_policy".into(), fmt_f64(g_at(horizons.t_policy))),
        ("G_at_T_eval_metrics".into(), fmt_f64(g_at(horizons.t_eval_metrics))),
        ("G_at_T_eval_policy".into(), fmt_f64(g_at(horizons.t_eval_policy))),
        ("test_rows_weighted".into(), weight_stats.n.to_string()),
        ("capped_weight_share_test".into(), fmt_f64(weight_stats.capped_share())),
        ("floored_share_test".into(), fmt_f64(weight_stats.floored_share())),
        ("mean_weight_test".into(), fmt_f64(weight_stats.mean)),
    ];
    for (k, v) in rows {
        w.row([k, v])?;
    }
    w.finish()?;

    let p2 = dir.join(G_CURVE_TABLE);
    let mut w = TableWriter::create(&p2, &["week", "n_at_risk", "G_marginal", "G_conditional_mean"])?;
    let t_max = g_marginal.len();
    for t in 0..t_max {
        let at_risk = g_curves.iter().filter(|c| c.survival.len() > t).count();
        let mean = if g_curves.is_empty() {
            1.0
        } else {
            g_curves.iter().map(|c| c.at(t as u32)).sum::<f64>() / g_curves.len() as f64
        };
        w.row([t.to_string(), at_risk.to_string(), fmt_f64(g_marginal[t]), fmt_f64(mean)])?;
    }
    w.finish()?;
    Ok(vec![p1, p2])
}
