//! Schedule/trigger sensitivity sweep.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::contrast::mean_survival;
use super::{compute_activation, mech_rescore, shock_rescore, DecayType, Trigger};
use crate::error::{Error, Result};
use crate::hazard::HazardScorer;
use crate::person_period::PersonPeriodTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub r_star: Vec<u32>,
    pub window_w: Vec<u32>,
    pub decay_type: Vec<DecayType>,
    pub alpha_week0: Vec<f64>,
    pub alpha_week1: Vec<f64>,
    pub delta_shock: Vec<f64>,
    pub window_exclusive_upper: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            r_star: vec![1, 2, 3],
            window_w: vec![1, 2, 3, 4],
            decay_type: vec![DecayType::Kb2023Step2w],
            alpha_week0: vec![0.20, 0.35, 0.50],
            alpha_week1: vec![0.05, 0.10],
            delta_shock: vec![0.08, 0.20, 0.60],
            window_exclusive_upper: true,
        }
    }
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.r_star.len()
            * self.window_w.len()
            * self.decay_type.len()
            * self.alpha_week0.len()
            * self.alpha_week1.len()
            * self.delta_shock.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub config_id: usize,
    pub r_star: u32,
    pub window_w: u32,
    pub decay_type: DecayType,
    pub alpha_week0: f64,
    pub alpha_week1: f64,
    pub delta_shock: f64,
    pub triggered: usize,
    pub active_rows: usize,
    pub shock_delta_t_policy: f64,
    pub shock_delta_t_eval_policy: f64,
    pub mech_delta_t_policy: f64,
    pub mech_delta_t_eval_policy: f64,
    pub mech_changed_rows: usize,
}

/// One row per configuration, ordered by `(r*, W, decay, α₀, α₁, δ)`.
pub fn sensitivity_grid(
    scorer: &dyn HazardScorer,
    table: &PersonPeriodTable,
    baseline: &[f64],
    spec: &GridSpec,
    t_policy: u32,
    t_eval_policy: u32,
) -> Result<Vec<GridRow>> {
    if spec.is_empty() {
        return Err(Error::Argument("sensitivity grid is empty".into()));
    }
    if let Some(&d) = spec.delta_shock.iter().find(|d| !(0.0..1.0).contains(*d)) {
        return Err(Error::Argument(format!("grid delta_shock {d} outside [0, 1)")));
    }
    if spec.r_star.contains(&0) || spec.window_w.contains(&0) {
        return Err(Error::Argument("grid r_star and window_w must be ≥ 1".into()));
    }
    let t_max = t_policy.max(t_eval_policy);
    let s0 = mean_survival(table, baseline, t_max);
    let delta_at = |s1: &[f64]| (s1[t_policy as usize] - s0[t_policy as usize], s1[t_eval_policy as usize] - s0[t_eval_policy as usize]);

    let triggers: Vec<(u32, u32)> = spec
        .r_star
        .iter()
        .flat_map(|&r| spec.window_w.iter().map(move |&w| (r, w)))
        .collect();
    let activations: HashMap<(u32, u32), super::Activation> = triggers
        .par_iter()
        .map(|&(r, w)| {
            let tr = Trigger {
                r_star: r,
                window_w: w,
                window_exclusive_upper: spec.window_exclusive_upper,
                retrigger: false,
            };
            ((r, w), compute_activation(table, &tr))
        })
        .collect();

    type MechKey = (u32, u32, DecayType, usize, usize);
    let mech_keys: Vec<MechKey> = triggers
        .iter()
        .flat_map(|&(r, w)| {
            spec.decay_type.iter().flat_map(move |&d| {
                (0..spec.alpha_week0.len())
                    .flat_map(move |i| (0..spec.alpha_week1.len()).map(move |j| (r, w, d, i, j)))
            })
        })
        .collect();
    let mech: HashMap<MechKey, ((f64, f64), usize)> = mech_keys
        .par_iter()
        .map(|&k| -> Result<_> {
            let (r, w, d, i, j) = k;
            let m = mech_rescore(
                scorer,
                table,
                baseline,
                &activations[&(r, w)],
                d,
                spec.alpha_week0[i],
                spec.alpha_week1[j],
            )?;
            let s1 = mean_survival(table, &m.hazards, t_max);
            Ok((k, (delta_at(&s1), m.diagnostics.changed_rows)))
        })
        .collect::<Result<_>>()?;

    let shock_keys: Vec<(u32, u32, usize)> = triggers
        .iter()
        .flat_map(|&(r, w)| (0..spec.delta_shock.len()).map(move |k| (r, w, k)))
        .collect();
    let shock: HashMap<(u32, u32, usize), (f64, f64)> = shock_keys
        .par_iter()
        .map(|&(r, w, k)| {
            let h1 = shock_rescore(baseline, &activations[&(r, w)], spec.delta_shock[k]);
            ((r, w, k), delta_at(&mean_survival(table, &h1, t_max)))
        })
        .collect();

    let mut rows = Vec::with_capacity(spec.len());
    for &(r, w) in &triggers {
        let act = &activations[&(r, w)];
        for &d in &spec.decay_type {
            for (i, &a0) in spec.alpha_week0.iter().enumerate() {
                for (j, &a1) in spec.alpha_week1.iter().enumerate() {
                    let ((m_pol, m_eval), changed) = mech[&(r, w, d, i, j)];
                    for (k, &delta) in spec.delta_shock.iter().enumerate() {
                        let (s_pol, s_eval) = shock[&(r, w, k)];
                        rows.push(GridRow {
                            config_id: rows.len(),
                            r_star: r,
                            window_w: w,
                            decay_type: d,
                            alpha_week0: a0,
                            alpha_week1: a1,
                            delta_shock: delta,
                            triggered: act.triggered,
                            active_rows: act.active_rows,
                            shock_delta_t_policy: s_pol,
                            shock_delta_t_eval_policy: s_eval,
                            mech_delta_t_policy: m_pol,
                            mech_delta_t_eval_policy: m_eval,
                            mech_changed_rows: changed,
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::super::tests::table_from_recency;
    use super::*;
    use crate::hazard::FeatureRow;

    struct Flat;
    impl HazardScorer for Flat {
        fn hazard(&self, row: &FeatureRow<'_>) -> f64 {
            0.05 + 0.001 * row.total_clicks
        }
    }

    #[test]
    fn default_grid_has_216_points() {
        assert_eq!(GridSpec::default().len(), 216);
        let t = table_from_recency(&[(false, &[0, 1, 0, 2, 3]), (true, &[1, 0, 1])]);
        let b = crate::hazard::predict_hazards(&Flat, &t);
        let rows = sensitivity_grid(&Flat, &t, &b, &GridSpec::default(), 2, 4).unwrap();
        assert_eq!(rows.len(), 216);
        assert!(rows.windows(2).all(|w| w[0].config_id + 1 == w[1].config_id));
    }

    #[test]
    fn empty_grid_rejected() {
        let t = table_from_recency(&[(false, &[0, 1])]);
        let spec = GridSpec {
            delta_shock: vec![],
            ..Default::default()
        };
        assert_eq!(
            sensitivity_grid(&Flat, &t, &[0.1, 0.1], &spec, 1, 1).unwrap_err().code(),
            "E_ARGUMENT"
        );
    }
}
