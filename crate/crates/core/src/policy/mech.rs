//! Mechanism-aware regime: counterfactual clicks inside the active window,
//! stateful recency/streak re-propagation, plug-in rescoring.

use rayon::prelude::*;
use serde::Serialize;

use super::{Activation, DecayType};
use crate::error::{Error, Result};
use crate::hazard::{FeatureRow, HazardScorer};
use crate::person_period::{step_state, PersonPeriodTable};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FeatureDelta {
    pub rows_changed: usize,
    pub active_rows_changed: usize,
    pub sum_delta: f64,
    pub min_delta: f64,
    pub max_delta: f64,
}

impl FeatureDelta {
    fn record(&mut self, delta: f64, active: bool) {
        if delta == 0.0 {
            return;
        }
        if self.rows_changed == 0 {
            self.min_delta = delta;
            self.max_delta = delta;
        } else {
            self.min_delta = self.min_delta.min(delta);
            self.max_delta = self.max_delta.max(delta);
        }
        self.rows_changed += 1;
        self.active_rows_changed += usize::from(active);
        self.sum_delta += delta;
    }

    fn merge(&mut self, o: &FeatureDelta) {
        if o.rows_changed == 0 {
            return;
        }
        if self.rows_changed == 0 {
            *self = *o;
            return;
        }
        self.rows_changed += o.rows_changed;
        self.active_rows_changed += o.active_rows_changed;
        self.sum_delta += o.sum_delta;
        self.min_delta = self.min_delta.min(o.min_delta);
        self.max_delta = self.max_delta.max(o.max_delta);
    }

    pub fn mean_delta(&self) -> f64 {
        if self.rows_changed == 0 {
            0.0
        } else {
            self.sum_delta / self.rows_changed as f64
        }
    }

    pub fn non_active_rows_changed(&self) -> usize {
        self.rows_changed - self.active_rows_changed
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MechDiagnostics {
    pub rows_total: usize,
    pub active_rows: usize,
    /// Rows with any modified model input.
    pub changed_rows: usize,
    pub total_clicks: FeatureDelta,
    pub activity: FeatureDelta,
    pub recency: FeatureDelta,
    pub streak: FeatureDelta,
    pub hazard: FeatureDelta,
    /// Changed rows that lie at or after the enrollment's event week.
    pub post_event_rows_changed: usize,
    /// Rows outside the window whose clicks changed.
    pub clicks_changed_outside_window: usize,
}

impl MechDiagnostics {
    fn merge(&mut self, o: &MechDiagnostics) {
        self.rows_total += o.rows_total;
        self.active_rows += o.active_rows;
        self.changed_rows += o.changed_rows;
        self.total_clicks.merge(&o.total_clicks);
        self.activity.merge(&o.activity);
        self.recency.merge(&o.recency);
        self.streak.merge(&o.streak);
        self.hazard.merge(&o.hazard);
        self.post_event_rows_changed += o.post_event_rows_changed;
        self.clicks_changed_outside_window += o.clicks_changed_outside_window;
    }

    pub fn changed_share(&self) -> f64 {
        if self.rows_total == 0 {
            0.0
        } else {
            self.changed_rows as f64 / self.rows_total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechResult {
    pub hazards: Vec<f64>,
    pub diagnostics: MechDiagnostics,
}

/// Rescores the counterfactual path of every enrollment. Rows whose inputs
/// are unchanged keep their baseline hazard bit for bit.
pub fn mech_rescore(
    scorer: &dyn HazardScorer,
    table: &PersonPeriodTable,
    baseline: &[f64],
    activation: &Activation,
    decay: DecayType,
    alpha_week0: f64,
    alpha_week1: f64,
) -> Result<MechResult> {
    if baseline.len() != table.n_rows() || activation.active.len() != table.n_rows() {
        return Err(Error::Contract("baseline/activation not aligned with the table".into()));
    }
    let parts: Vec<(Vec<f64>, MechDiagnostics)> = (0..table.n_enrollments())
        .into_par_iter()
        .map(|u| -> Result<_> {
            let span = table.spans[u].clone();
            let e = &table.enrollments[u];
            let mut hz: Vec<f64> = baseline[span.clone()].to_vec();
            let mut d = MechDiagnostics {
                rows_total: span.len(),
                ..Default::default()
            };
            let mut state: Option<(u32, u32)> = None;
            let mut diverged = false;
            for (i, r) in span.clone().enumerate() {
                let active = activation.active[r];
                d.active_rows += usize::from(active);
                if table.event[r] {
                    // event rows keep their observed inputs
                    break;
                }
                let clicks0 = table.total_clicks[r];
                let clicks = match activation.offset[r] {
                    Some(off) if active => clicks0 * decay.multiplier(off, alpha_week0, alpha_week1),
                    _ => clicks0,
                };
                if !clicks.is_finite() {
                    return Err(Error::Contract(format!(
                        "non-finite counterfactual clicks for {} week {}",
                        e.key, table.week[r]
                    )));
                }
                let act1 = clicks > 0.0;
                let (rec1, str1) = if diverged || act1 != table.active[r] {
                    step_state(act1, state)
                } else {
                    (table.recency[r], table.streak[r])
                };
                state = Some((rec1, str1));
                let rec_changed = rec1 != table.recency[r];
                let str_changed = str1 != table.streak[r];
                diverged = rec_changed || str_changed;
                let clicks_changed = clicks != clicks0;
                if clicks_changed && !active {
                    d.clicks_changed_outside_window += 1;
                }
                if !(clicks_changed || rec_changed || str_changed) {
                    continue;
                }
                d.changed_rows += 1;
                d.total_clicks.record(clicks - clicks0, active);
                d.activity.record(f64::from(u8::from(act1)) - f64::from(u8::from(table.active[r])), active);
                d.recency.record(f64::from(rec1) - f64::from(table.recency[r]), active);
                d.streak.record(f64::from(str1) - f64::from(table.streak[r]), active);
                let row = FeatureRow {
                    week: table.week[r],
                    total_clicks: clicks,
                    recency: f64::from(rec1),
                    streak: f64::from(str1),
                    submitted: if table.submitted[r] { 1.0 } else { 0.0 },
                    enrollment: e,
                };
                let h = scorer.hazard(&row);
                d.hazard.record(h - hz[i], active);
                hz[i] = h;
            }
            Ok((hz, d))
        })
        .collect::<Result<_>>()?;

    let mut hazards = Vec::with_capacity(table.n_rows());
    let mut diagnostics = MechDiagnostics::default();
    for (h, d) in parts {
        hazards.extend(h);
        diagnostics.merge(&d);
    }
    Ok(MechResult {
        hazards,
        diagnostics,
    })
}
