//! Row-level and horizon-level discrimination/calibration metrics.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::censoring::ipcw_weight;
use crate::error::{Error, Result};
use crate::hazard::SurvivalCurve;
use crate::ingestion::{Enrollment, EnrollmentKey};

/// Mann-Whitney AUC; ties count one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Contract("scores and labels differ in length".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        // average 1-based rank of the tie block
        let avg = (i + j + 1) as f64 / 2.0;
        let pos = idx[i..j].iter().filter(|&&k| labels[k]).count();
        rank_sum += avg * pos as f64;
        i = j;
    }
    let np = n_pos as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Observed outcome of one enrollment under some endpoint definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub event: bool,
    /// Event week for events, last follow-up week otherwise.
    pub time: u32,
}

impl Outcome {
    pub fn primary(e: &Enrollment) -> Self {
        Outcome {
            event: e.event,
            time: e.t_final,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonStatus {
    EventByHorizon,
    EventFreeThroughHorizon,
    CensoredByHorizon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonLabel {
    pub key: EnrollmentKey,
    pub status: HorizonStatus,
    /// `1{E=1 ∧ t_event ≤ T}`.
    pub y: bool,
    /// `1 − Ŝ(T)`.
    pub p: f64,
    pub w: f64,
    pub floored: bool,
    pub capped: bool,
}

/// Horizon labels with Graf-style weights: events by `T` use
/// `1/Ĝᵢ(t_event−)`, subjects still under observation after `T` use
/// `1/Ĝᵢ(T)`, subjects censored at or before `T` get weight 0.
pub fn horizon_labels(
    keys: &[EnrollmentKey],
    outcomes: &[Outcome],
    survival: &[SurvivalCurve],
    censoring: &[SurvivalCurve],
    t: u32,
    g_min: f64,
    cap: f64,
) -> Result<Vec<HorizonLabel>> {
    let n = keys.len();
    if outcomes.len() != n || survival.len() != n || censoring.len() != n {
        return Err(Error::Contract("horizon inputs are not aligned".into()));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let o = outcomes[i];
        let g = &censoring[i];
        let (status, g_val) = if o.event && o.time <= t {
            let g_prev = if o.time == 0 { 1.0 } else { g.at(o.time - 1) };
            (HorizonStatus::EventByHorizon, Some(g_prev))
        } else if o.time > t {
            (HorizonStatus::EventFreeThroughHorizon, Some(g.at(t)))
        } else {
            (HorizonStatus::CensoredByHorizon, None)
        };
        let (w, floored, capped) = match g_val {
            Some(gv) => {
                let w = ipcw_weight(gv, g_min, cap);
                (w.w, w.floored, w.capped)
            }
            None => (0.0, false, false),
        };
        out.push(HorizonLabel {
            key: keys[i].clone(),
            status,
            y: status == HorizonStatus::EventByHorizon,
            p: 1.0 - survival[i].at(t),
            w,
            floored,
            capped,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Brier {
    /// `(1/n) Σ wᵢ (Yᵢ − pᵢ)²`.
    pub per_n: f64,
    /// `Σ wᵢ (Yᵢ − pᵢ)² / Σ wᵢ`.
    pub per_weight: f64,
}

pub fn brier_ipcw(labels: &[HorizonLabel]) -> Result<Brier> {
    if labels.is_empty() {
        return Err(Error::UndefinedMetric("Brier score on zero subjects".into()));
    }
    let mut num = 0.0;
    let mut wsum = 0.0;
    for l in labels {
        let y = if l.y { 1.0 } else { 0.0 };
        num += l.w * (y - l.p).powi(2);
        wsum += l.w;
    }
    Ok(Brier {
        per_n: num / labels.len() as f64,
        per_weight: if wsum > 0.0 { num / wsum } else { f64::NAN },
    })
}

/// Mean of per-week scores for `t = 0..=T`.
pub fn ibs(scores: &[f64]) -> f64 {
    if scores.is_empty() {
        return f64::NAN;
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}

/// Brier curve `BS(0..=T)` under the 1/n normalization.
pub fn brier_curve(
    keys: &[EnrollmentKey],
    outcomes: &[Outcome],
    survival: &[SurvivalCurve],
    censoring: &[SurvivalCurve],
    t_max: u32,
    g_min: f64,
    cap: f64,
) -> Result<Vec<f64>> {
    (0..=t_max)
        .map(|t| {
            let labels = horizon_labels(keys, outcomes, survival, censoring, t, g_min, cap)?;
            Ok(brier_ipcw(&labels)?.per_n)
        })
        .collect()
}

struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick {
            tree: vec![0.0; n + 1],
        }
    }

    fn add(&mut self, i: usize, v: f64) {
        let mut i = i + 1;
        while i < self.tree.len() {
            self.tree[i] += v;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over positions `< i`.
    fn prefix(&self, i: usize) -> f64 {
        let mut i = i;
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Concordance {
    pub cindex: f64,
    pub comparable_weight: f64,
    pub comparable_pairs: u64,
}

/// IPCW-weighted discrete-time concordance at horizon `T`.
///
/// Pair `(i, j)` is comparable when `i` has an event at `tᵢ ≤ T` and `j` is
/// still event-free at the end of week `tᵢ`: `tⱼ > tᵢ`, or `j` censored at
/// `tᵢ`. The pair carries weight `wᵢ`; it is concordant when `riskᵢ > riskⱼ`,
/// ties count one half.
pub fn cindex(risk: &[f64], outcomes: &[Outcome], weights: &[f64], t: u32) -> Result<Concordance> {
    let n = risk.len();
    if outcomes.len() != n || weights.len() != n {
        return Err(Error::Contract("c-index inputs are not aligned".into()));
    }
    // rank risks to dense indices
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| risk[a].total_cmp(&risk[b]));
    let mut rank = vec![0usize; n];
    let mut n_ranks = 0;
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 && risk[i] != risk[order[pos - 1]] {
            n_ranks += 1;
        }
        rank[i] = n_ranks;
    }
    let n_ranks = n_ranks + 1;

    // j is comparable to event i iff key_j > 2 tᵢ
    let key = |o: &Outcome| 2 * u64::from(o.time) + u64::from(!o.event);
    let mut pool: Vec<usize> = (0..n).collect();
    pool.sort_by_key(|&j| std::cmp::Reverse(key(&outcomes[j])));
    let mut events: Vec<usize> = (0..n)
        .filter(|&i| outcomes[i].event && outcomes[i].time <= t)
        .collect();
    events.sort_by_key(|&i| std::cmp::Reverse(outcomes[i].time));

    let mut fw = Fenwick::new(n_ranks);
    let mut inserted = 0usize;
    let mut next = 0usize;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut pairs = 0u64;
    for &i in &events {
        let threshold = 2 * u64::from(outcomes[i].time);
        while next < pool.len() && key(&outcomes[pool[next]]) > threshold {
            fw.add(rank[pool[next]], 1.0);
            inserted += 1;
            next += 1;
        }
        if inserted == 0 {
            continue;
        }
        let less = fw.prefix(rank[i]);
        let equal = fw.prefix(rank[i] + 1) - less;
        num += weights[i] * (less + 0.5 * equal);
        den += weights[i] * inserted as f64;
        pairs += inserted as u64;
    }
    if pairs == 0 || den <= 0.0 {
        return Err(Error::UndefinedMetric("no comparable pairs for the c-index".into()));
    }
    Ok(Concordance {
        cindex: num / den,
        comparable_weight: den,
        comparable_pairs: pairs,
    })
}

/// Time-dependent concordance: same comparable pairs and weights as
/// [`cindex`], but the pair is scored on `Ŝ(tᵢ)` of both subjects, so each
/// risk is read at a week where both are still observed.
pub fn cindex_td(curves: &[SurvivalCurve], outcomes: &[Outcome], weights: &[f64], t: u32) -> Result<Concordance> {
    let n = curves.len();
    if outcomes.len() != n || weights.len() != n {
        return Err(Error::Contract("c-index inputs are not aligned".into()));
    }
    let key = |o: &Outcome| 2 * u64::from(o.time) + u64::from(!o.event);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut pairs = 0u64;
    for i in (0..n).filter(|&i| outcomes[i].event && outcomes[i].time <= t) {
        let ti = outcomes[i].time;
        let si = curves[i].at(ti);
        for j in (0..n).filter(|&j| key(&outcomes[j]) > 2 * u64::from(ti)) {
            let sj = curves[j].at(ti);
            let c = if si < sj {
                1.0
            } else if si == sj {
                0.5
            } else {
                0.0
            };
            num += weights[i] * c;
            den += weights[i];
            pairs += 1;
        }
    }
    if pairs == 0 || den <= 0.0 {
        return Err(Error::UndefinedMetric("no comparable pairs for the c-index".into()));
    }
    Ok(Concordance {
        cindex: num / den,
        comparable_weight: den,
        comparable_pairs: pairs,
    })
}

/// Expected calibration error over `bins` equal-width bins on [0, 1].
pub fn ece(probs: &[f64], labels: &[bool], bins: usize) -> f64 {
    if probs.is_empty() || bins == 0 {
        return 0.0;
    }
    let mut sum_p = vec![0.0; bins];
    let mut sum_y = vec![0.0; bins];
    let mut cnt = vec![0usize; bins];
    for (&p, &y) in probs.iter().zip(labels) {
        let b = ((p * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        sum_p[b] += p;
        sum_y[b] += if y { 1.0 } else { 0.0 };
        cnt[b] += 1;
    }
    let n = probs.len() as f64;
    (0..bins)
        .filter(|&b| cnt[b] > 0)
        .map(|b| {
            let c = cnt[b] as f64;
            (c / n) * (sum_p[b] / c - sum_y[b] / c).abs()
        })
        .sum()
}

/// Unweighted mean squared error of row probabilities.
pub fn brier_rows(probs: &[f64], labels: &[bool]) -> f64 {
    if probs.is_empty() {
        return f64::NAN;
    }
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| (if y { 1.0 } else { 0.0 } - p).powi(2))
        .sum::<f64>()
        / probs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupDiagnostics {
    pub group: String,
    pub n_rows: usize,
    pub n_events: usize,
    pub auc: Option<f64>,
    pub brier: f64,
    pub ece: f64,
}

/// Row-level AUC, unweighted Brier and 15-bin ECE per group level.
pub fn by_group_diagnostics(probs: &[f64], labels: &[bool], groups: &[&str]) -> Vec<GroupDiagnostics> {
    let mut by: BTreeMap<&str, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for ((&p, &y), &g) in probs.iter().zip(labels).zip(groups) {
        let e = by.entry(g).or_default();
        e.0.push(p);
        e.1.push(y);
    }
    by.into_iter()
        .map(|(g, (p, y))| GroupDiagnostics {
            group: g.to_string(),
            n_rows: p.len(),
            n_events: y.iter().filter(|&&v| v).count(),
            auc: auc(&p, &y).ok(),
            brier: brier_rows(&p, &y),
            ece: ece(&p, &y, 15),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hazard::SurvivalCurve;

    #[test]
    fn auc_hand_case() {
        let s = [0.9, 0.8, 0.7, 0.1];
        let y = [true, false, true, false];
        assert_eq!(auc(&s, &y).unwrap(), 0.75);
        assert_eq!(auc(&[0.1, 0.9], &[false, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
        assert_eq!(auc(&[0.5], &[true]).unwrap_err().code(), "E_UNDEFINED_METRIC");
    }

    #[test]
    fn ibs_examples() {
        assert_eq!(ibs(&[0.2; 5]), 0.2);
        assert_eq!(ibs(&[0.0, 1.0]), 0.5);
    }

    #[test]
    fn ece_examples() {
        assert!((ece(&[0.2, 0.2], &[true, false], 15) - 0.3).abs() < 1e-15);
        assert_eq!(ece(&[0.5, 0.5], &[true, false], 15), 0.0);
        assert_eq!(ece(&[1.0, 0.0], &[true, false], 15), 0.0);
    }

    fn label(y: bool, p: f64, w: f64) -> HorizonLabel {
        HorizonLabel {
            key: EnrollmentKey::new(0, "A", "B"),
            status: if y {
                HorizonStatus::EventByHorizon
            } else {
                HorizonStatus::EventFreeThroughHorizon
            },
            y,
            p,
            w,
            floored: false,
            capped: false,
        }
    }

    #[test]
    fn brier_direct() {
        let b = brier_ipcw(&[label(true, 0.5, 2.0)]).unwrap();
        assert_eq!(b.per_n, 0.5);
        let b = brier_ipcw(&[label(true, 1.0, 1.0), label(false, 0.0, 1.0)]).unwrap();
        assert_eq!(b.per_n, 0.0);
        assert!(brier_ipcw(&[]).is_err());
    }

    #[test]
    fn brier_three_subjects_mixed_censoring() {
        let k = |i| EnrollmentKey::new(i, "A", "B");
        let keys = [k(1), k(2), k(3)];
        // subject 1: event at week 1; 2: censored at week 0; 3: follow-up to week 3
        let outcomes = [
            Outcome { event: true, time: 1 },
            Outcome { event: false, time: 0 },
            Outcome { event: false, time: 3 },
        ];
        let surv = [
            SurvivalCurve::new(k(1), vec![0.1, 0.3]),
            SurvivalCurve::new(k(2), vec![0.2]),
            SurvivalCurve::new(k(3), vec![0.1, 0.1, 0.1, 0.1]),
        ];
        let cens = [
            SurvivalCurve::new(k(1), vec![0.5, 0.0]),
            SurvivalCurve::new(k(2), vec![0.9]),
            SurvivalCurve::new(k(3), vec![0.2, 0.2, 0.5, 0.5]),
        ];
        let labels = horizon_labels(&keys, &outcomes, &surv, &cens, 2, 0.05, 20.0).unwrap();
        // 1: Y=1, p = 1-0.9*0.7 = 0.37, w = 1/G1(0) = 1/0.5 = 2
        // 2: weight 0
        // 3: Y=0, p = 1-0.9^3 = 0.271, w = 1/G3(2) = 1/(0.8*0.8*0.5) = 3.125
        let hand = (2.0 * 0.63f64.powi(2) + 3.125 * 0.271f64.powi(2)) / 3.0;
        let b = brier_ipcw(&labels).unwrap();
        assert!((b.per_n - hand).abs() < 1e-12, "{} vs {hand}", b.per_n);
        assert_eq!(labels[1].w, 0.0);
    }

    fn brute_cindex(risk: &[f64], o: &[Outcome], w: &[f64], t: u32) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..risk.len() {
            if !(o[i].event && o[i].time <= t) {
                continue;
            }
            for j in 0..risk.len() {
                if i == j {
                    continue;
                }
                let comparable = o[j].time > o[i].time || (!o[j].event && o[j].time == o[i].time);
                if comparable {
                    den += w[i];
                    num += w[i]
                        * if risk[i] > risk[j] {
                            1.0
                        } else if risk[i] == risk[j] {
                            0.5
                        } else {
                            0.0
                        };
                }
            }
        }
        num / den
    }

    #[test]
    fn cindex_perfect_and_ties() {
        let o = [
            Outcome { event: true, time: 1 },
            Outcome { event: true, time: 2 },
            Outcome { event: false, time: 5 },
        ];
        let risk: Vec<f64> = o.iter().map(|x| -(x.time as f64)).collect();
        assert_eq!(cindex(&risk, &o, &[1.0; 3], 10).unwrap().cindex, 1.0);
        assert_eq!(cindex(&[0.3; 3], &o, &[1.0; 3], 10).unwrap().cindex, 0.5);
    }

    #[test]
    fn cindex_matches_pair_enumeration() {
        let o = [
            Outcome { event: true, time: 2 },
            Outcome { event: false, time: 2 },
            Outcome { event: true, time: 1 },
        ];
        let risk = [0.4, 0.5, 0.3];
        let w = [1.5, 0.0, 2.0];
        let fast = cindex(&risk, &o, &w, 3).unwrap().cindex;
        assert!((fast - brute_cindex(&risk, &o, &w, 3)).abs() < 1e-12);
    }

    #[test]
    fn no_pairs_is_undefined() {
        let o = [Outcome { event: false, time: 3 }];
        assert!(cindex(&[0.1], &o, &[1.0], 3).is_err());
    }

    #[test]
    fn groups_identical_metrics() {
        let p = [0.1, 0.6, 0.1, 0.6];
        let y = [false, true, false, true];
        let d = by_group_diagnostics(&p, &y, &["a", "a", "b", "b"]);
        assert_eq!(d[0].auc, d[1].auc);
        assert_eq!(d[0].brier, d[1].brier);
        assert_eq!(d[0].ece, d[1].ece);
    }

    #[test]
    fn cindex_td_reads_survival_at_event_week() {
        let k = |i| EnrollmentKey::new(i, "AAA", "2013J");
        // i: event at week 1 with high early hazard; j: censored at 3 with
        // low weekly hazard but longer exposure.
        let ci = SurvivalCurve::new(k(1), vec![0.3, 0.3]);
        let cj = SurvivalCurve::new(k(2), vec![0.2, 0.2, 0.2, 0.2]);
        let o = [Outcome { event: true, time: 1 }, Outcome { event: false, time: 3 }];
        let w = [2.0, 1.0];
        // 1 − S(T=3) with LOCF ranks j above i; the time-dependent score does not
        let risk = [1.0 - ci.at(3), 1.0 - cj.at(3)];
        assert_eq!(cindex(&risk, &o, &w, 3).unwrap().cindex, 0.0);
        let c = cindex_td(&[ci, cj], &o, &w, 3).unwrap();
        assert_eq!((c.cindex, c.comparable_pairs, c.comparable_weight), (1.0, 1, 2.0));
    }
}
