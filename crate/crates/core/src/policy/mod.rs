//! Recency-triggered intervention rule under the shock and mechanism-aware
//! regimes.

pub mod contrast;
pub mod export;
pub mod grid;
pub mod mech;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::person_period::PersonPeriodTable;

pub use contrast::{mean_survival, scenario_contrast, ScenarioContrast};
pub use grid::{sensitivity_grid, GridRow, GridSpec};
pub use mech::{mech_rescore, MechDiagnostics, MechResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Shock,
    MechanismAware,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Shock => "shock",
            Branch::MechanismAware => "mechanism_aware",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioStatus {
    Anchored,
    Hypothetical,
}

impl ScenarioStatus {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioStatus::Anchored => "anchored",
            ScenarioStatus::Hypothetical => "hypothetical",
        }
    }
}

/// Uplift schedule over window offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DecayType {
    /// `1+α₀` at offset 0, `1+α₁` at offset 1, 1 afterwards.
    Kb2023Step2w,
}

impl DecayType {
    pub fn name(self) -> &'static str {
        match self {
            DecayType::Kb2023Step2w => "kb2023_step_2w",
        }
    }

    pub fn multiplier(self, offset: u32, alpha_week0: f64, alpha_week1: f64) -> f64 {
        match (self, offset) {
            (DecayType::Kb2023Step2w, 0) => 1.0 + alpha_week0,
            (DecayType::Kb2023Step2w, 1) => 1.0 + alpha_week1,
            (DecayType::Kb2023Step2w, _) => 1.0,
        }
    }
}

impl fmt::Display for DecayType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecayType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kb2023_step_2w" => Ok(DecayType::Kb2023Step2w),
            _ => Err(Error::Argument(format!("unknown decay type `{s}`"))),
        }
    }
}

impl Serialize for DecayType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for DecayType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_true() -> bool {
    true
}

fn default_decay() -> DecayType {
    DecayType::Kb2023Step2w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyScenario {
    pub scenario_id: String,
    pub branch: Branch,
    #[serde(default)]
    pub label: String,
    pub status: ScenarioStatus,
    pub r_star: u32,
    pub window_w: u32,
    #[serde(default)]
    pub delta_shock: f64,
    #[serde(default)]
    pub alpha_week0: f64,
    #[serde(default)]
    pub alpha_week1: f64,
    #[serde(default = "default_decay")]
    pub decay_type: DecayType,
    #[serde(default = "default_true")]
    pub window_exclusive_upper: bool,
    /// Open a new window on every later recency crossing.
    #[serde(default)]
    pub retrigger: bool,
}

impl PolicyScenario {
    pub fn shock(id: &str, label: &str, status: ScenarioStatus, delta: f64) -> Self {
        PolicyScenario {
            scenario_id: id.into(),
            branch: Branch::Shock,
            label: label.into(),
            status,
            r_star: 1,
            window_w: 2,
            delta_shock: delta,
            alpha_week0: 0.0,
            alpha_week1: 0.0,
            decay_type: DecayType::Kb2023Step2w,
            window_exclusive_upper: true,
            retrigger: false,
        }
    }

    pub fn mech(id: &str, label: &str, alpha_week0: f64, alpha_week1: f64) -> Self {
        PolicyScenario {
            scenario_id: id.into(),
            branch: Branch::MechanismAware,
            label: label.into(),
            status: ScenarioStatus::Hypothetical,
            delta_shock: 0.0,
            alpha_week0,
            alpha_week1,
            ..PolicyScenario::shock(id, label, ScenarioStatus::Hypothetical, 0.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(format!("scenario `{}`: {m}", self.scenario_id)));
        if self.scenario_id.is_empty() {
            return Err(Error::Argument("scenario id must not be empty".into()));
        }
        if !(0.0..1.0).contains(&self.delta_shock) {
            return bad(format!("delta_shock {} outside [0, 1)", self.delta_shock));
        }
        if self.r_star < 1 {
            return bad("r_star must be ≥ 1".into());
        }
        if self.window_w < 1 {
            return bad("window_w must be ≥ 1".into());
        }
        if !(self.alpha_week0 >= 0.0 && self.alpha_week1 >= 0.0)
            || !self.alpha_week0.is_finite()
            || !self.alpha_week1.is_finite()
        {
            return bad("alphas must be finite and ≥ 0".into());
        }
        Ok(())
    }

    pub fn trigger(&self) -> Trigger {
        Trigger {
            r_star: self.r_star,
            window_w: self.window_w,
            window_exclusive_upper: self.window_exclusive_upper,
            retrigger: self.retrigger,
        }
    }
}

/// Scenario catalog used when the configuration does not declare one.
pub fn default_catalog() -> Vec<PolicyScenario> {
    vec![
        PolicyScenario::shock("shock_anchored", "anchored conservative", ScenarioStatus::Anchored, 0.08),
        PolicyScenario::shock("shock_hyp_a", "hypothetical A (reference)", ScenarioStatus::Hypothetical, 0.20),
        PolicyScenario::shock("shock_hyp_b", "hypothetical B (stress test)", ScenarioStatus::Hypothetical, 0.60),
        PolicyScenario::mech("mech_shared", "shared mechanism-aware schedule", 0.35, 0.10),
    ]
}

/// Trigger part of a scenario; activation depends on nothing else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Trigger {
    pub r_star: u32,
    pub window_w: u32,
    pub window_exclusive_upper: bool,
    pub retrigger: bool,
}

impl Trigger {
    fn window_len(&self) -> u32 {
        if self.window_exclusive_upper {
            self.window_w
        } else {
            self.window_w + 1
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    /// First trigger week per enrollment.
    pub t_star: Vec<Option<u32>>,
    /// Per row.
    pub active: Vec<bool>,
    /// Week offset from the opening of the row's window, for active rows.
    pub offset: Vec<Option<u32>>,
    pub triggered: usize,
    pub active_rows: usize,
    pub event_rows_forced_inactive: usize,
}

/// `t* = min{t : recency ≥ r*}`, active on `[t*, t*+W)` (closed at `t*+W`
/// when the upper bound is inclusive). Event rows are never active.
pub fn compute_activation(table: &PersonPeriodTable, trigger: &Trigger) -> Activation {
    let n = table.n_rows();
    let mut act = Activation {
        t_star: vec![None; table.n_enrollments()],
        active: vec![false; n],
        offset: vec![None; n],
        triggered: 0,
        active_rows: 0,
        event_rows_forced_inactive: 0,
    };
    let len = trigger.window_len();
    for (u, span) in table.spans.iter().enumerate() {
        let mut window: Option<u32> = None;
        for r in span.clone() {
            let t = table.week[r];
            let in_window = window.is_some_and(|s| t < s + len);
            if !in_window && table.recency[r] >= trigger.r_star {
                if act.t_star[u].is_none() {
                    act.t_star[u] = Some(t);
                    window = Some(t);
                } else if trigger.retrigger {
                    window = Some(t);
                }
            }
            if let Some(s) = window {
                if t >= s && t < s + len {
                    if table.event[r] {
                        act.event_rows_forced_inactive += 1;
                    } else {
                        act.active[r] = true;
                        act.offset[r] = Some(t - s);
                        act.active_rows += 1;
                    }
                }
            }
        }
        if act.t_star[u].is_some() {
            act.triggered += 1;
        }
    }
    act
}

/// `ĥ¹ = ĥ⁰ (1 − δ)` on active rows.
pub fn shock_rescore(baseline: &[f64], activation: &Activation, delta: f64) -> Vec<f64> {
    baseline
        .iter()
        .zip(&activation.active)
        .map(|(&h, &a)| if a { h * (1.0 - delta) } else { h })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::person_period::tests::enrollment;
    use crate::person_period::{PersonPeriodRow, PersonPeriodTable};

    pub(crate) fn table_from_recency(units: &[(bool, &[u32])]) -> PersonPeriodTable {
        let rows = units
            .iter()
            .enumerate()
            .map(|(i, (event, rec))| {
                let e = enrollment(i as i64, *event, rec.len() as u32 - 1);
                let rows = rec
                    .iter()
                    .enumerate()
                    .map(|(t, &r)| PersonPeriodRow {
                        t: t as u32,
                        total_clicks: if r == 0 { 10.0 } else { 0.0 },
                        recency: r,
                        streak: u32::from(r == 0),
                        submitted_this_week: false,
                        active: r == 0,
                        event: *event && t + 1 == rec.len(),
                    })
                    .collect();
                (e, rows)
            })
            .collect();
        PersonPeriodTable::from_rows(rows)
    }

    fn default_trigger() -> Trigger {
        PolicyScenario::shock("s", "", ScenarioStatus::Anchored, 0.1).trigger()
    }

    #[test]
    fn window_after_first_crossing() {
        let t = table_from_recency(&[(false, &[0, 1, 0, 0, 0])]);
        let a = compute_activation(&t, &default_trigger());
        assert_eq!(a.t_star, vec![Some(1)]);
        assert_eq!(a.active, vec![false, true, true, false, false]);
        assert_eq!(a.offset[2], Some(1));
    }

    #[test]
    fn never_triggered_when_always_active() {
        let t = table_from_recency(&[(false, &[0, 0, 0])]);
        let a = compute_activation(&t, &default_trigger());
        assert_eq!(a.t_star, vec![None]);
        assert_eq!(a.active_rows, 0);
    }

    #[test]
    fn event_row_forced_inactive() {
        let t = table_from_recency(&[(true, &[0, 0, 1])]);
        let a = compute_activation(&t, &default_trigger());
        assert_eq!(a.t_star, vec![Some(2)]);
        assert!(a.active.iter().all(|&x| !x));
        assert_eq!(a.event_rows_forced_inactive, 1);

        let t = table_from_recency(&[(true, &[0, 1, 2])]);
        let a = compute_activation(&t, &default_trigger());
        assert_eq!(a.active, vec![false, true, false]);
    }

    #[test]
    fn inclusive_upper_and_retrigger() {
        let t = table_from_recency(&[(false, &[1, 2, 3, 4, 5, 6])]);
        let mut tr = default_trigger();
        tr.window_exclusive_upper = false;
        let a = compute_activation(&t, &tr);
        assert_eq!(a.active_rows, 3);
        tr.window_exclusive_upper = true;
        tr.retrigger = true;
        let a = compute_activation(&t, &tr);
        assert_eq!(a.active_rows, 6);
        assert_eq!(a.offset[2], Some(0));
    }

    #[test]
    fn shock_examples() {
        let t = table_from_recency(&[(false, &[1, 0, 0])]);
        let a = compute_activation(&t, &default_trigger());
        let h = shock_rescore(&[0.2, 0.2, 0.2], &a, 0.08);
        assert!((h[0] - 0.184).abs() < 1e-15);
        assert_eq!(h[2], 0.2);
        assert_eq!(shock_rescore(&[0.2, 0.3, 0.4], &a, 0.0), vec![0.2, 0.3, 0.4]);
    }

    #[test]
    fn scenario_validation() {
        let mut s = PolicyScenario::shock("x", "", ScenarioStatus::Anchored, 1.0);
        assert!(s.validate().is_err());
        s.delta_shock = 0.5;
        assert!(s.validate().is_ok());
        s.window_w = 0;
        assert!(s.validate().is_err());
        assert!("nope".parse::<DecayType>().is_err());
    }
}
