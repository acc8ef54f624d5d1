//! Scenario runner and the policy artifact tables.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::mech::FeatureDelta;
use super::{
    compute_activation, mech_rescore, scenario_contrast, sensitivity_grid, shock_rescore, Branch,
    GridRow, GridSpec, MechDiagnostics, PolicyScenario, ScenarioContrast, Trigger,
};
use crate::censoring::HorizonConfig;
use crate::csvio::{fmt_f64, TableWriter};
use crate::error::{Error, Result};
use crate::hazard::HazardScorer;
use crate::person_period::PersonPeriodTable;

pub const OPERATOR_MODE: &str = "clicks_plus_stateful_recency_streak";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivationSummary {
    pub r_star: u32,
    pub window_w: u32,
    pub window_exclusive_upper: bool,
    pub retrigger: bool,
    pub n_enrollments: usize,
    pub n_rows: usize,
    pub triggered: usize,
    pub active_rows: usize,
    pub event_rows_forced_inactive: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub scenario: PolicyScenario,
    pub hazards: Vec<f64>,
    pub contrast: ScenarioContrast,
    pub activation: ActivationSummary,
    /// Mechanism-aware branch only.
    pub mech: Option<MechDiagnostics>,
    /// Hazard change on modified rows.
    pub hazard_delta: FeatureDelta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRun {
    pub outcomes: Vec<ScenarioOutcome>,
    /// Largest |ĥ_mech(α=0) − ĥ⁰| over all rows.
    pub alpha_zero_max_abs_diff: f64,
    pub grid: Vec<GridRow>,
}

impl PolicyRun {
    pub fn outcome(&self, scenario_id: &str) -> Option<&ScenarioOutcome> {
        self.outcomes.iter().find(|o| o.scenario.scenario_id == scenario_id)
    }
}

fn hazard_delta(h0: &[f64], h1: &[f64], active: &[bool]) -> FeatureDelta {
    let mut d = FeatureDelta::default();
    let mut first = true;
    for ((&a, &b), &act) in h0.iter().zip(h1).zip(active) {
        let delta = b - a;
        if delta == 0.0 {
            continue;
        }
        if first {
            d.min_delta = delta;
            d.max_delta = delta;
            first = false;
        }
        d.rows_changed += 1;
        d.active_rows_changed += usize::from(act);
        d.sum_delta += delta;
        d.min_delta = d.min_delta.min(delta);
        d.max_delta = d.max_delta.max(delta);
    }
    d
}

/// Runs every catalog scenario on `table` and the sensitivity grid.
pub fn run_policy(
    scorer: &dyn HazardScorer,
    table: &PersonPeriodTable,
    baseline: &[f64],
    catalog: &[PolicyScenario],
    grid: &GridSpec,
    horizons: &HorizonConfig,
) -> Result<PolicyRun> {
    if catalog.is_empty() {
        return Err(Error::Argument("scenario catalog is empty".into()));
    }
    let mut ids = std::collections::HashSet::new();
    for s in catalog {
        s.validate()?;
        if !ids.insert(&s.scenario_id) {
            return Err(Error::Argument(format!("duplicate scenario id `{}`", s.scenario_id)));
        }
    }
    let mut outcomes = Vec::with_capacity(catalog.len());
    for s in catalog {
        let trigger = s.trigger();
        let act = compute_activation(table, &trigger);
        let (hazards, mech) = match s.branch {
            Branch::Shock => (shock_rescore(baseline, &act, s.delta_shock), None),
            Branch::MechanismAware => {
                let m = mech_rescore(scorer, table, baseline, &act, s.decay_type, s.alpha_week0, s.alpha_week1)?;
                (m.hazards, Some(m.diagnostics))
            }
        };
        let contrast = scenario_contrast(
            &s.scenario_id,
            table,
            baseline,
            &hazards,
            horizons.t_policy,
            horizons.t_eval_policy,
        )?;
        outcomes.push(ScenarioOutcome {
            scenario: s.clone(),
            hazard_delta: hazard_delta(baseline, &hazards, &act.active),
            hazards,
            contrast,
            activation: summarize(&trigger, &act, table),
            mech,
        });
    }

    let default_trigger = catalog[0].trigger();
    let act = compute_activation(table, &default_trigger);
    let zero = mech_rescore(scorer, table, baseline, &act, catalog[0].decay_type, 0.0, 0.0)?;
    let alpha_zero_max_abs_diff = zero
        .hazards
        .iter()
        .zip(baseline)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let grid = sensitivity_grid(scorer, table, baseline, grid, horizons.t_policy, horizons.t_eval_policy)?;
    Ok(PolicyRun {
        outcomes,
        alpha_zero_max_abs_diff,
        grid,
    })
}

fn summarize(trigger: &Trigger, act: &super::Activation, table: &PersonPeriodTable) -> ActivationSummary {
    ActivationSummary {
        r_star: trigger.r_star,
        window_w: trigger.window_w,
        window_exclusive_upper: trigger.window_exclusive_upper,
        retrigger: trigger.retrigger,
        n_enrollments: table.n_enrollments(),
        n_rows: table.n_rows(),
        triggered: act.triggered,
        active_rows: act.active_rows,
        event_rows_forced_inactive: act.event_rows_forced_inactive,
    }
}

fn b(x: bool) -> String {
    if x { "true" } else { "false" }.into()
}

/// Marginal `Ĝ(t)` carried forward past its support.
fn g_at(g: &[f64], t: u32) -> f64 {
    match g.len() {
        0 => 1.0,
        n => g[(t as usize).min(n - 1)],
    }
}

/// Writes the policy tables into `dir`; returns the written paths.
pub fn write_policy_tables(
    dir: &Path,
    run: &PolicyRun,
    horizons: &HorizonConfig,
    g_marginal: &[f64],
    anchor_source: &str,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let path = |name: &str| dir.join(name);
    let default = &run.outcomes[0].scenario;

    let p = path("table_policy_spec.csv");
    let mut w = TableWriter::create(&p, &["parameter", "value", "note"])?;
    let rows: Vec<[String; 3]> = vec![
        ["r_star".into(), default.r_star.to_string(), "weekly proxy for 7-day inactivity".into()],
        ["trigger_frequency".into(), "weekly".into(), String::new()],
        ["trigger_rule".into(), "t_star = min{t : recency >= r_star}".into(), "first crossing only".into()],
        ["window_W".into(), default.window_w.to_string(), "active weeks from t_star".into()],
        ["window_exclusive_upper".into(), b(default.window_exclusive_upper), String::new()],
        ["retrigger".into(), b(default.retrigger), String::new()],
        ["event_rows".into(), "forced_inactive".into(), "all regimes".into()],
        ["intervention_class".into(), "short-term digital nudge".into(), String::new()],
        ["anchor_source".into(), anchor_source.into(), String::new()],
        ["T_policy".into(), horizons.t_policy.to_string(), "primary reporting horizon".into()],
        ["T_eval_policy".into(), horizons.t_eval_policy.to_string(), "trajectory support".into()],
        ["T_eval_metrics".into(), horizons.t_eval_metrics.to_string(), "last week with G >= g_min".into()],
        ["survival_tail".into(), "locf".into(), "fixed denominator N over test enrollments".into()],
    ];
    for r in rows {
        w.row(r)?;
    }
    w.finish()?;
    written.push(p);

    let p = path("table_policy_scenarios_main.csv");
    let mut w = TableWriter::create(
        &p,
        &[
            "scenario_id",
            "branch",
            "status",
            "label",
            "delta_shock",
            "alpha_week0",
            "alpha_week1",
            "decay_type",
            "r_star",
            "window_W",
            "deltaS_T_policy",
            "deltaS_T_eval_policy",
        ],
    )?;
    for o in &run.outcomes {
        let s = &o.scenario;
        w.row([
            s.scenario_id.clone(),
            s.branch.name().into(),
            s.status.name().into(),
            s.label.clone(),
            fmt_f64(s.delta_shock),
            fmt_f64(s.alpha_week0),
            fmt_f64(s.alpha_week1),
            s.decay_type.name().into(),
            s.r_star.to_string(),
            s.window_w.to_string(),
            fmt_f64(o.contrast.delta_t_policy),
            fmt_f64(o.contrast.delta_t_eval_policy),
        ])?;
    }
    w.finish()?;
    written.push(p);

    let p = path("table_policy_scenario_params.csv");
    let mut w = TableWriter::create(&p, &["scenario_id", "parameter", "value"])?;
    for o in &run.outcomes {
        let s = &o.scenario;
        let params: [(&str, String); 10] = [
            ("branch", s.branch.name().into()),
            ("status", s.status.name().into()),
            ("r_star", s.r_star.to_string()),
            ("window_W", s.window_w.to_string()),
            ("window_exclusive_upper", b(s.window_exclusive_upper)),
            ("retrigger", b(s.retrigger)),
            ("delta_shock", fmt_f64(s.delta_shock)),
            ("alpha_week0", fmt_f64(s.alpha_week0)),
            ("alpha_week1", fmt_f64(s.alpha_week1)),
            ("decay_type", s.decay_type.name().into()),
        ];
        for (k, v) in params {
            w.row([s.scenario_id.clone(), k.to_string(), v])?;
        }
    }
    w.finish()?;
    written.push(p);

    let p = path("table_policy_deltaS_by_week_by_scenario.csv");
    let mut w = TableWriter::create(&p, &["scenario_id", "branch", "week", "S_baseline", "S_policy", "deltaS"])?;
    for o in &run.outcomes {
        for wk in &o.contrast.weekly {
            w.row([
                o.scenario.scenario_id.clone(),
                o.scenario.branch.name().into(),
                wk.week.to_string(),
                fmt_f64(wk.s_baseline),
                fmt_f64(wk.s_policy),
                fmt_f64(wk.delta),
            ])?;
        }
    }
    w.finish()?;
    written.push(p);

    let p = path("table_policy_deltaS_at_horizons_by_scenario.csv");
    let mut w = TableWriter::create(
        &p,
        &["scenario_id", "branch", "horizon", "week", "S_baseline", "S_policy", "deltaS"],
    )?;
    for o in &run.outcomes {
        for (name, t) in [("T_policy", horizons.t_policy), ("T_eval_policy", horizons.t_eval_policy)] {
            let wk = o.contrast.at(t).expect("contrast covers both horizons");
            w.row([
                o.scenario.scenario_id.clone(),
                o.scenario.branch.name().into(),
                name.into(),
                t.to_string(),
                fmt_f64(wk.s_baseline),
                fmt_f64(wk.s_policy),
                fmt_f64(wk.delta),
            ])?;
        }
    }
    w.finish()?;
    written.push(p);

    let p = path("table_policy_horizons_dual.csv");
    let mut w = TableWriter::create(&p, &["horizon", "week", "role", "G_marginal", "survival_tail"])?;
    for (name, t, role) in [
        ("T_policy", horizons.t_policy, "primary deltaS and deltaGap reporting"),
        ("T_eval_metrics", horizons.t_eval_metrics, "IPCW-weighted metrics (G >= g_min)"),
        ("T_eval_policy", horizons.t_eval_policy, "raw trajectory support only"),
    ] {
        w.row([
            name.to_string(),
            t.to_string(),
            role.to_string(),
            fmt_f64(g_at(g_marginal, t)),
            "locf".to_string(),
        ])?;
    }
    w.finish()?;
    written.push(p);

    let mech = run
        .outcomes
        .iter()
        .find(|o| o.scenario.branch == Branch::MechanismAware)
        .map(|o| &o.scenario);
    let p = path("table_policy_mech_operator_spec.csv");
    let mut w = TableWriter::create(&p, &["field", "value"])?;
    let spec: Vec<(&str, String)> = vec![
        ("channel_mode", OPERATOR_MODE.into()),
        ("overwrite_feature", "total_clicks".into()),
        ("overwrite_rule", "total_clicks_cf = total_clicks * b(t - t_star) on active rows".into()),
        ("timing", "offset 0 -> 1 + alpha_week0; offset 1 -> 1 + alpha_week1; otherwise 1".into()),
        ("activity_rule", "active_cf = total_clicks_cf > 0".into()),
        ("propagation_rule", "recency/streak recomputed statefully from the first modified week to the row before the event".into()),
        ("submitted_this_week", "unmodified".into()),
        ("fractional_clicks", "kept".into()),
        ("rescoring", "same fitted codec and calibrated model as baseline".into()),
        ("decay_type", mech.map_or(String::new(), |s| s.decay_type.name().into())),
        ("alpha_week0", mech.map_or(String::new(), |s| fmt_f64(s.alpha_week0))),
        ("alpha_week1", mech.map_or(String::new(), |s| fmt_f64(s.alpha_week1))),
        ("window_W", mech.map_or(String::new(), |s| s.window_w.to_string())),
        ("window_exclusive_upper", mech.map_or(String::new(), |s| b(s.window_exclusive_upper))),
    ];
    for (k, v) in spec {
        w.row([k.to_string(), v])?;
    }
    w.finish()?;
    written.push(p);

    let p = path("table_policy_activation_summary.csv");
    let mut w = TableWriter::create(
        &p,
        &[
            "scenario_id",
            "r_star",
            "window_W",
            "window_exclusive_upper",
            "retrigger",
            "n_enrollments",
            "n_rows",
            "triggered",
            "share_triggered",
            "active_rows",
            "share_active_rows",
            "event_rows_forced_inactive",
        ],
    )?;
    for o in &run.outcomes {
        let a = &o.activation;
        let share = |x: usize, n: usize| if n == 0 { 0.0 } else { x as f64 / n as f64 };
        w.row([
            o.scenario.scenario_id.clone(),
            a.r_star.to_string(),
            a.window_w.to_string(),
            b(a.window_exclusive_upper),
            b(a.retrigger),
            a.n_enrollments.to_string(),
            a.n_rows.to_string(),
            a.triggered.to_string(),
            fmt_f64(share(a.triggered, a.n_enrollments)),
            a.active_rows.to_string(),
            fmt_f64(share(a.active_rows, a.n_rows)),
            a.event_rows_forced_inactive.to_string(),
        ])?;
    }
    w.finish()?;
    written.push(p);

    let p = path("table_policy_covariate_overwrites.csv");
    let mut w = TableWriter::create(
        &p,
        &[
            "scenario_id",
            "branch",
            "quantity",
            "rows_total",
            "rows_changed",
            "share_rows_changed",
            "active_rows_changed",
            "non_active_rows_changed",
            "mean_delta",
            "min_delta",
            "max_delta",
        ],
    )?;
    for o in &run.outcomes {
        let n = o.activation.n_rows;
        let mut items: Vec<(&str, FeatureDelta)> = Vec::new();
        if let Some(m) = &o.mech {
            items.push(("total_clicks", m.total_clicks));
            items.push(("activity", m.activity));
            items.push(("recency", m.recency));
            items.push(("streak", m.streak));
        }
        items.push(("hazard", o.hazard_delta));
        for (q, d) in items {
            w.row([
                o.scenario.scenario_id.clone(),
                o.scenario.branch.name().into(),
                q.to_string(),
                n.to_string(),
                d.rows_changed.to_string(),
                fmt_f64(if n == 0 { 0.0 } else { d.rows_changed as f64 / n as f64 }),
                d.active_rows_changed.to_string(),
                d.non_active_rows_changed().to_string(),
                fmt_f64(d.mean_delta()),
                fmt_f64(d.min_delta),
                fmt_f64(d.max_delta),
            ])?;
        }
    }
    w.finish()?;
    written.push(p);

    let p = path("table_policy_covariate_propagation_checks.csv");
    let mut w = TableWriter::create(&p, &["scenario_id", "check", "value", "pass"])?;
    for o in &run.outcomes {
        let id = &o.scenario.scenario_id;
        if let Some(m) = &o.mech {
            let checks: [(&str, f64, bool); 4] = [
                ("post_event_rows_changed", m.post_event_rows_changed as f64, m.post_event_rows_changed == 0),
                (
                    "clicks_changed_outside_window",
                    m.clicks_changed_outside_window as f64,
                    m.clicks_changed_outside_window == 0,
                ),
                ("non_active_propagation_rows", m.recency.non_active_rows_changed().max(m.streak.non_active_rows_changed()) as f64, true),
                ("changed_row_share", m.changed_share(), true),
            ];
            for (c, v, ok) in checks {
                w.row([id.clone(), c.to_string(), fmt_f64(v), b(ok)])?;
            }
        } else {
            let inactive_changed = o.hazard_delta.non_active_rows_changed();
            w.row([
                id.clone(),
                "inactive_rows_changed".to_string(),
                fmt_f64(inactive_changed as f64),
                b(inactive_changed == 0),
            ])?;
            let dominated = o.hazard_delta.rows_changed == 0 || o.hazard_delta.max_delta <= 0.0;
            w.row([
                id.clone(),
                "shock_hazard_non_increasing".to_string(),
                fmt_f64(o.hazard_delta.max_delta),
                b(dominated),
            ])?;
        }
    }
    w.row([
        "*".to_string(),
        "alpha_zero_reproduces_baseline".to_string(),
        fmt_f64(run.alpha_zero_max_abs_diff),
        b(run.alpha_zero_max_abs_diff == 0.0),
    ])?;
    w.finish()?;
    written.push(p);

    let p = path("table_rq2_sensitivity_grid.csv");
    let mut w = TableWriter::create(
        &p,
        &[
            "config_id",
            "r_star",
            "window_W",
            "decay_type",
            "alpha_week0",
            "alpha_week1",
            "delta_shock",
            "triggered",
            "active_rows",
            "shock_deltaS_T_policy",
            "shock_deltaS_T_eval_policy",
            "mech_deltaS_T_policy",
            "mech_deltaS_T_eval_policy",
            "mech_changed_rows",
        ],
    )?;
    for g in &run.grid {
        w.row([
            g.config_id.to_string(),
            g.r_star.to_string(),
            g.window_w.to_string(),
            g.decay_type.name().into(),
            fmt_f64(g.alpha_week0),
            fmt_f64(g.alpha_week1),
            fmt_f64(g.delta_shock),
            g.triggered.to_string(),
            g.active_rows.to_string(),
            fmt_f64(g.shock_delta_t_policy),
            fmt_f64(g.shock_delta_t_eval_policy),
            fmt_f64(g.mech_delta_t_policy),
            fmt_f64(g.mech_delta_t_eval_policy),
            g.mech_changed_rows.to_string(),
        ])?;
    }
    w.finish()?;
    written.push(p);

    Ok(written)
}

/// File names of [`write_policy_tables`], in write order.
pub const POLICY_TABLES: [&str; 11] = [
    "table_policy_spec.csv",
    "table_policy_scenarios_main.csv",
    "table_policy_scenario_params.csv",
    "table_policy_deltaS_by_week_by_scenario.csv",
    "table_policy_deltaS_at_horizons_by_scenario.csv",
    "table_policy_horizons_dual.csv",
    "table_policy_mech_operator_spec.csv",
    "table_policy_activation_summary.csv",
    "table_policy_covariate_overwrites.csv",
    "table_policy_covariate_propagation_checks.csv",
    "table_rq2_sensitivity_grid.csv",
];
