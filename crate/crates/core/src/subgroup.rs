//! Two-level group contrasts of mean survival and their bootstrap intervals.

use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csvio::{fmt_f64, TableWriter};
use crate::error::{Error, Result};
use crate::hazard::SurvivalCurve;
use crate::ingestion::Enrollment;
use crate::rng::{stream_rng, Stream};

/// Explicit level → {0, 1} mapping for one categorical static column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupMap {
    pub column: String,
    /// `levels[g]` is the level mapped to `g`.
    pub levels: [String; 2],
}

impl GroupMap {
    pub fn new(column: &str, level0: &str, level1: &str) -> Result<Self> {
        if level0 == level1 {
            return Err(Error::Argument(format!("group levels must differ (both `{level0}`)")));
        }
        Ok(GroupMap {
            column: column.into(),
            levels: [level0.into(), level1.into()],
        })
    }

    /// Parses `F=1,M=0`.
    pub fn parse(column: &str, spec: &str) -> Result<Self> {
        let mut levels: [Option<String>; 2] = [None, None];
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (level, g) = part
                .split_once('=')
                .ok_or_else(|| Error::Argument(format!("group mapping `{part}` is not LEVEL=0|1")))?;
            let slot = match g.trim() {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::Argument(format!("group value `{other}` must be 0 or 1"))),
            };
            if levels[slot].replace(level.trim().to_string()).is_some() {
                return Err(Error::Argument(format!("group value {slot} mapped twice")));
            }
        }
        match levels {
            [Some(a), Some(b)] => GroupMap::new(column, &a, &b),
            _ => Err(Error::Argument(format!("group mapping `{spec}` must map exactly one level to each of 0 and 1"))),
        }
    }

    pub fn orientation(&self) -> String {
        format!("{} minus {}", self.levels[1], self.levels[0])
    }

    pub fn swapped(&self) -> Self {
        GroupMap {
            column: self.column.clone(),
            levels: [self.levels[1].clone(), self.levels[0].clone()],
        }
    }

    pub fn indicators(&self, enrollments: &[Enrollment]) -> Result<Vec<u8>> {
        enrollments
            .iter()
            .map(|e| {
                let v = e.statics.categorical(&e.key, &self.column).ok_or_else(|| {
                    Error::Argument(format!("`{}` is not a categorical static column", self.column))
                })?;
                self.levels
                    .iter()
                    .position(|l| l == v)
                    .map(|g| g as u8)
                    .ok_or_else(|| {
                        Error::Argument(format!(
                            "{}: level `{v}` of `{}` is not in the group mapping",
                            e.key, self.column
                        ))
                    })
            })
            .collect()
    }
}

/// `μ̄_g = mean of values over members of g`, for g = 0, 1.
pub fn group_means(values: &[f64], groups: &[u8], map: &GroupMap) -> Result<[f64; 2]> {
    if values.len() != groups.len() {
        return Err(Error::Contract("values and group labels differ in length".into()));
    }
    let mut sum = [0.0; 2];
    let mut n = [0usize; 2];
    for (&v, &g) in values.iter().zip(groups) {
        sum[g as usize] += v;
        n[g as usize] += 1;
    }
    for g in 0..2 {
        if n[g] == 0 {
            return Err(Error::EmptyInput(format!(
                "group `{}` of `{}` has no enrollments",
                map.levels[g], map.column
            )));
        }
    }
    Ok([sum[0] / n[0] as f64, sum[1] / n[1] as f64])
}

/// Survival of every curve at week `t`, carried forward past its last row.
pub fn survival_at(curves: &[SurvivalCurve], t: u32) -> Vec<f64> {
    curves.iter().map(|c| c.at(t)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapPoint {
    pub mean_baseline: [f64; 2],
    pub mean_policy: [f64; 2],
    pub gap_baseline: f64,
    pub gap_policy: f64,
    pub delta_gap: f64,
}

pub fn delta_gap(baseline: &[f64], policy: &[f64], groups: &[u8], map: &GroupMap) -> Result<GapPoint> {
    if baseline.len() != policy.len() {
        return Err(Error::Contract("regimes cover different enrollments".into()));
    }
    let m0 = group_means(baseline, groups, map)?;
    let m1 = group_means(policy, groups, map)?;
    let gap_baseline = m0[1] - m0[0];
    let gap_policy = m1[1] - m1[0];
    Ok(GapPoint {
        mean_baseline: m0,
        mean_policy: m1,
        gap_baseline,
        gap_policy,
        delta_gap: gap_policy - gap_baseline,
    })
}

/// Checks that both regimes list the same enrollments in the same order.
pub fn aligned_groups(baseline: &[SurvivalCurve], policy: &[SurvivalCurve]) -> Result<()> {
    if baseline.len() != policy.len() || baseline.iter().zip(policy).any(|(a, b)| a.key != b.key) {
        return Err(Error::Contract("baseline and regime curves cover different enrollments".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub replicates: u32,
    pub seed: u64,
    /// Resample within each group instead of over all enrollments.
    pub stratified: bool,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 500,
            seed: 42,
            stratified: false,
            level: 0.95,
        }
    }
}

/// Values of one horizon, aligned with the group labels.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonValues {
    pub name: String,
    pub week: u32,
    pub baseline: Vec<f64>,
    pub policy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapResult {
    pub column: String,
    pub orientation: String,
    pub horizon: String,
    pub week: u32,
    pub n: [usize; 2],
    pub point: GapPoint,
    pub ci_low: f64,
    pub ci_high: f64,
    pub replicates: Vec<f64>,
}

impl GapResult {
    pub fn excludes_zero(&self) -> bool {
        self.ci_low > 0.0 || self.ci_high < 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapRun {
    pub config: BootstrapConfig,
    pub results: Vec<GapResult>,
    /// Redrawn resamples with an empty group.
    pub redraws: u32,
}

/// Linear-interpolated empirical quantile of sorted `xs`.
pub fn quantile_sorted(xs: &[f64], p: f64) -> f64 {
    let h = (xs.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
}

fn resample(rng: &mut impl Rng, groups: &[u8], members: &[Vec<usize>; 2], stratified: bool) -> Vec<usize> {
    let n = groups.len();
    if stratified {
        let mut idx = Vec::with_capacity(n);
        for m in members {
            idx.extend((0..m.len()).map(|_| m[rng.gen_range(0..m.len())]));
        }
        idx
    } else {
        (0..n).map(|_| rng.gen_range(0..n)).collect()
    }
}

/// Percentile bootstrap of ΔGap. Each replicate draws one resample of
/// enrollments and evaluates every horizon on it; replicate `b` uses its
/// own seeded stream, so the result does not depend on thread scheduling.
pub fn bootstrap_ci(
    horizons: &[HorizonValues],
    groups: &[u8],
    map: &GroupMap,
    cfg: &BootstrapConfig,
) -> Result<BootstrapRun> {
    if cfg.replicates == 0 {
        return Err(Error::Argument("bootstrap needs at least one replicate".into()));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::Argument(format!("confidence level {} outside (0, 1)", cfg.level)));
    }
    let points: Vec<GapPoint> = horizons
        .iter()
        .map(|h| delta_gap(&h.baseline, &h.policy, groups, map))
        .collect::<Result<_>>()?;
    let mut members: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &g) in groups.iter().enumerate() {
        members[g as usize].push(i);
    }

    let max_redraws = 10 * cfg.replicates;
    let per_rep: Vec<(Vec<f64>, u32)> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| -> Result<_> {
            let mut rng = stream_rng(cfg.seed, Stream::Bootstrap(b));
            let mut redraws = 0u32;
            let idx = loop {
                let idx = resample(&mut rng, groups, &members, cfg.stratified);
                let mut seen = [false; 2];
                for &i in &idx {
                    seen[groups[i] as usize] = true;
                }
                if seen[0] && seen[1] {
                    break idx;
                }
                redraws += 1;
                if redraws > max_redraws {
                    return Err(Error::EmptyInput(format!(
                        "bootstrap replicate {b}: a group stayed empty after {max_redraws} redraws"
                    )));
                }
            };
            let g: Vec<u8> = idx.iter().map(|&i| groups[i]).collect();
            let vals = horizons
                .iter()
                .map(|h| {
                    let s0: Vec<f64> = idx.iter().map(|&i| h.baseline[i]).collect();
                    let s1: Vec<f64> = idx.iter().map(|&i| h.policy[i]).collect();
                    delta_gap(&s0, &s1, &g, map).map(|p| p.delta_gap)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((vals, redraws))
        })
        .collect::<Result<_>>()?;

    let redraws: u32 = per_rep.iter().map(|(_, r)| r).sum();
    if redraws > max_redraws {
        return Err(Error::EmptyInput(format!(
            "bootstrap needed {redraws} redraws (cap {max_redraws})"
        )));
    }
    let n = [members[0].len(), members[1].len()];
    let tail = (1.0 - cfg.level) / 2.0;
    let results = horizons
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let replicates: Vec<f64> = per_rep.iter().map(|(v, _)| v[k]).collect();
            let mut sorted = replicates.clone();
            sorted.sort_by(f64::total_cmp);
            GapResult {
                column: map.column.clone(),
                orientation: map.orientation(),
                horizon: h.name.clone(),
                week: h.week,
                n,
                point: points[k],
                ci_low: quantile_sorted(&sorted, tail),
                ci_high: quantile_sorted(&sorted, 1.0 - tail),
                replicates,
            }
        })
        .collect();
    Ok(BootstrapRun {
        config: *cfg,
        results,
        redraws,
    })
}

pub const REPLICATES_TABLE: &str = "rq3_policy_bootstrap_replicates.csv";
pub const WIDE_TABLE: &str = "rq3_policy_bootstrap_wide.csv";

pub fn gap_table_name(week: u32) -> String {
    format!("table_rq3_gap_T{week}.csv")
}

/// Writes the wide summary, one gap table per horizon, and the replicate
/// values. Returns the written paths.
pub fn write_subgroup_tables(dir: &Path, scenario_id: &str, run: &BootstrapRun, note: &str) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let b = |x: bool| if x { "true" } else { "false" }.to_string();

    let mut header: Vec<String> = ["scenario_id", "group_column", "orientation", "B", "seed", "resampling", "ci_level", "redraws"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for r in &run.results {
        for f in ["week", "gap_baseline", "gap_policy", "deltaGap", "ci_low", "ci_high", "excludes_zero"] {
            header.push(format!("{f}_{}", r.horizon));
        }
    }
    header.push("note".into());
    let p = dir.join(WIDE_TABLE);
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut w = TableWriter::create(&p, &hdr)?;
    let first = &run.results[0];
    let mut row = vec![
        scenario_id.to_string(),
        first.column.clone(),
        first.orientation.clone(),
        run.config.replicates.to_string(),
        run.config.seed.to_string(),
        if run.config.stratified { "stratified_by_group" } else { "plain_enrollment" }.to_string(),
        fmt_f64(run.config.level),
        run.redraws.to_string(),
    ];
    for r in &run.results {
        row.extend([
            r.week.to_string(),
            fmt_f64(r.point.gap_baseline),
            fmt_f64(r.point.gap_policy),
            fmt_f64(r.point.delta_gap),
            fmt_f64(r.ci_low),
            fmt_f64(r.ci_high),
            b(r.excludes_zero()),
        ]);
    }
    row.push(note.to_string());
    w.row(row)?;
    w.finish()?;
    written.push(p);

    for r in &run.results {
        let p = dir.join(gap_table_name(r.week));
        let mut w = TableWriter::create(
            &p,
            &["scenario_id", "horizon", "week", "row", "level", "n", "baseline", "policy", "delta"],
        )?;
        let levels = r.orientation.split(" minus ").collect::<Vec<_>>();
        for g in 0..2 {
            let level = levels[1 - g];
            w.row([
                scenario_id.to_string(),
                r.horizon.clone(),
                r.week.to_string(),
                format!("mean_S_g{g}"),
                level.to_string(),
                r.n[g].to_string(),
                fmt_f64(r.point.mean_baseline[g]),
                fmt_f64(r.point.mean_policy[g]),
                fmt_f64(r.point.mean_policy[g] - r.point.mean_baseline[g]),
            ])?;
        }
        w.row([
            scenario_id.to_string(),
            r.horizon.clone(),
            r.week.to_string(),
            "gap".to_string(),
            r.orientation.clone(),
            (r.n[0] + r.n[1]).to_string(),
            fmt_f64(r.point.gap_baseline),
            fmt_f64(r.point.gap_policy),
            fmt_f64(r.point.delta_gap),
        ])?;
        w.finish()?;
        written.push(p);
    }

    let p = dir.join(REPLICATES_TABLE);
    let mut w = TableWriter::create(&p, &["replicate", "horizon", "week", "deltaGap"])?;
    for r in &run.results {
        for (i, v) in r.replicates.iter().enumerate() {
            w.row([i.to_string(), r.horizon.clone(), r.week.to_string(), fmt_f64(*v)])?;
        }
    }
    w.finish()?;
    written.push(p);
    Ok(written)
}
