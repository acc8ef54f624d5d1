use serde::Serialize;

use crate::error::{Error, Result};
use crate::hazard::survival::HAZARD_CLAMP;
use crate::person_period::PersonPeriodTable;

/// `S̄(t) = (1/N) Σᵢ Ŝᵢ(min(t, t_finalᵢ))` for `t = 0..=t_max`, each curve
/// held constant past its last row.
pub fn mean_survival(table: &PersonPeriodTable, hazards: &[f64], t_max: u32) -> Vec<f64> {
    let len = t_max as usize + 1;
    let mut sums = vec![0.0; len];
    for span in &table.spans {
        let mut s = 1.0;
        let mut t = 0usize;
        for r in span.clone() {
            s *= 1.0 - hazards[r].clamp(0.0, HAZARD_CLAMP);
            if t < len {
                sums[t] += s;
            }
            t += 1;
        }
        while t < len {
            sums[t] += s;
            t += 1;
        }
    }
    let n = table.n_enrollments().max(1) as f64;
    sums.into_iter().map(|x| x / n).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeekContrast {
    pub week: u32,
    pub s_baseline: f64,
    pub s_policy: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioContrast {
    pub scenario_id: String,
    pub weekly: Vec<WeekContrast>,
    pub delta_t_policy: f64,
    pub delta_t_eval_policy: f64,
}

impl ScenarioContrast {
    pub fn at(&self, t: u32) -> Option<&WeekContrast> {
        self.weekly.get(t as usize)
    }
}

pub fn scenario_contrast(
    scenario_id: &str,
    table: &PersonPeriodTable,
    baseline: &[f64],
    policy: &[f64],
    t_policy: u32,
    t_eval_policy: u32,
) -> Result<ScenarioContrast> {
    if baseline.len() != table.n_rows() || policy.len() != table.n_rows() {
        return Err(Error::Contract(format!(
            "scenario `{scenario_id}`: regimes scored on different row sets"
        )));
    }
    let t_max = t_policy.max(t_eval_policy);
    let s0 = mean_survival(table, baseline, t_max);
    let s1 = mean_survival(table, policy, t_max);
    let weekly: Vec<WeekContrast> = s0
        .iter()
        .zip(&s1)
        .enumerate()
        .map(|(t, (&a, &b))| WeekContrast {
            week: t as u32,
            s_baseline: a,
            s_policy: b,
            delta: b - a,
        })
        .collect();
    Ok(ScenarioContrast {
        scenario_id: scenario_id.into(),
        delta_t_policy: weekly[t_policy as usize].delta,
        delta_t_eval_policy: weekly[t_eval_policy as usize].delta,
        weekly,
    })
}
