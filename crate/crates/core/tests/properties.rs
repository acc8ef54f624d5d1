use proptest::prelude::*;

use weekhaz_core::endpoint::composite_outcome;
use weekhaz_core::hazard::{survival_curves, survival_product};
use weekhaz_core::ingestion::{build_backbone, Enrollment, EnrollmentKey, FinalResult, Statics, WeeklyActivity};
use weekhaz_core::metrics::{cindex, Outcome};
use weekhaz_core::person_period::{build_person_period, PersonPeriodRow, PersonPeriodTable};
use weekhaz_core::policy::{compute_activation, mean_survival, shock_rescore, Trigger};
use weekhaz_core::splitting::{assign_folds, bucket_of, quantile_edges, stratified_split, Partition};
use weekhaz_core::subgroup::{bootstrap_ci, BootstrapConfig, GroupMap, HorizonValues};
use weekhaz_core::synth::{generate, SynthSpec};

#[derive(Debug, Clone)]
struct Unit {
    event: bool,
    fail: bool,
    female: bool,
    active: Vec<bool>,
    h: Vec<f64>,
}

fn unit() -> impl Strategy<Value = Unit> {
    (1usize..9).prop_flat_map(|len| {
        (
            any::<bool>(),
            any::<bool>(),
            any::<bool>(),
            prop::collection::vec(any::<bool>(), len),
            prop::collection::vec(0.0f64..0.95, len),
        )
            .prop_map(|(event, fail, female, active, h)| Unit { event, fail, female, active, h })
    })
}

/// Recency and streak written from their definitions.
fn counters(active: &[bool], t: usize) -> (u32, u32) {
    let streak = active[..=t].iter().rev().take_while(|&&a| a).count() as u32;
    let recency = match active[..=t].iter().rposition(|&a| a) {
        Some(last) => (t - last) as u32,
        None => t as u32 + 1,
    };
    (recency, streak)
}

fn table(units: &[Unit]) -> PersonPeriodTable {
    PersonPeriodTable::from_rows(
        units
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let tf = u.h.len() as u32 - 1;
                let e = Enrollment {
                    key: EnrollmentKey::new(i as i64, "AAA", "2013J"),
                    final_result: match (u.event, u.fail) {
                        (true, _) => FinalResult::Withdrawn,
                        (false, true) => FinalResult::Fail,
                        (false, false) => FinalResult::Pass,
                    },
                    date_unregistration: u.event.then_some(7 * i64::from(tf)),
                    event: u.event,
                    t_event: u.event.then_some(tf),
                    t_last_obs: tf,
                    t_final: tf,
                    statics: Statics {
                        gender: if u.female { "F" } else { "M" }.into(),
                        highest_education: "HE".into(),
                        age_band: "0-35".into(),
                        num_of_prev_attempts: 0.0,
                        studied_credits: 60.0,
                    },
                };
                let rows = (0..u.h.len())
                    .map(|t| {
                        let (recency, streak) = counters(&u.active, t);
                        PersonPeriodRow {
                            t: t as u32,
                            total_clicks: if u.active[t] { 1.0 } else { 0.0 },
                            recency,
                            streak,
                            submitted_this_week: false,
                            active: u.active[t],
                            event: u.event && t as u32 == tf,
                        }
                    })
                    .collect();
                (e, rows)
            })
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn survival_is_nonincreasing_in_unit_interval(h in prop::collection::vec(0.0f64..=1.0, 1..40)) {
        let s = survival_product(&h);
        prop_assert!(s.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!(s.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn shock_gains_are_nonnegative_and_grow_with_delta(
        units in prop::collection::vec(unit(), 1..12),
        r_star in 1u32..4,
        w in 1u32..5,
        d1 in 0.0f64..0.99,
        d2 in 0.0f64..0.99,
    ) {
        let t = table(&units);
        let h0: Vec<f64> = units.iter().flat_map(|u| u.h.iter().copied()).collect();
        let act = compute_activation(&t, &Trigger { r_star, window_w: w, window_exclusive_upper: true, retrigger: false });
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let s0 = mean_survival(&t, &h0, 10);
        let sl = mean_survival(&t, &shock_rescore(&h0, &act, lo), 10);
        let sh = mean_survival(&t, &shock_rescore(&h0, &act, hi), 10);
        for k in 0..s0.len() {
            prop_assert!(sl[k] >= s0[k]);
            prop_assert!(sh[k] >= sl[k]);
        }
        prop_assert_eq!(shock_rescore(&h0, &act, 0.0), h0);
        // event rows are never active
        for r in 0..t.n_rows() {
            prop_assert!(!(t.event[r] && act.active[r]));
        }
    }

    #[test]
    fn composite_events_contain_primary_events(units in prop::collection::vec(unit(), 1..20)) {
        let t = table(&units);
        for e in &t.enrollments {
            let p = Outcome::primary(e);
            let c = composite_outcome(e);
            if p.event {
                prop_assert_eq!(c, p);
            }
            prop_assert!(c.time <= e.t_final);
            prop_assert_eq!(c.event, e.event || e.final_result == FinalResult::Fail);
        }
    }

    #[test]
    fn cindex_matches_pair_enumeration(
        units in prop::collection::vec(unit(), 2..15),
        w in prop::collection::vec(0.1f64..5.0, 15),
        horizon in 0u32..9,
    ) {
        let t = table(&units);
        let outcomes: Vec<Outcome> = t.enrollments.iter().map(Outcome::primary).collect();
        // coarse risks so ties occur
        let risk: Vec<f64> = survival_curves(&t, &units.iter().flat_map(|u| u.h.iter().copied()).collect::<Vec<_>>())
            .iter()
            .map(|c| ((1.0 - c.at(horizon)) * 4.0).round() / 4.0)
            .collect();
        let w = &w[..units.len()];
        let (mut num, mut den) = (0.0, 0.0);
        for (i, oi) in outcomes.iter().enumerate() {
            if !(oi.event && oi.time <= horizon) {
                continue;
            }
            for (j, oj) in outcomes.iter().enumerate() {
                if i != j && (oj.time > oi.time || (oj.time == oi.time && !oj.event)) {
                    num += w[i] * if risk[i] > risk[j] { 1.0 } else if risk[i] == risk[j] { 0.5 } else { 0.0 };
                    den += w[i];
                }
            }
        }
        match cindex(&risk, &outcomes, w, horizon) {
            Ok(c) => prop_assert!((c.cindex - num / den).abs() < 1e-12),
            Err(_) => prop_assert!(den == 0.0),
        }
    }

    #[test]
    fn quantile_edges_are_increasing_and_cover(values in prop::collection::vec(0u32..60, 1..200), q in 1usize..8) {
        let edges = quantile_edges(&values, q).unwrap();
        prop_assert!(edges.windows(2).all(|w| w[0] < w[1]));
        let lo = *values.iter().min().unwrap();
        let hi = *values.iter().max().unwrap();
        prop_assert!(edges[0] <= lo && *edges.last().unwrap() <= hi);
        let n_buckets = edges.len().saturating_sub(1).max(1);
        prop_assert!(values.iter().all(|&v| bucket_of(v, &edges) < n_buckets));
    }

    #[test]
    fn bootstrap_is_deterministic_and_antisymmetric(
        base in prop::collection::vec(0.0f64..1.0, 6..40),
        gain in 0.0f64..0.2,
        seed in any::<u64>(),
    ) {
        let n = base.len();
        let groups: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let hv = vec![HorizonValues {
            name: "T".into(),
            week: 3,
            baseline: base.clone(),
            policy: base.iter().enumerate().map(|(i, s)| s + gain * (i % 3) as f64 / 3.0).collect(),
        }];
        let map = GroupMap::new("gender", "M", "F").unwrap();
        let cfg = BootstrapConfig { replicates: 40, seed, ..Default::default() };
        let a = bootstrap_ci(&hv, &groups, &map, &cfg).unwrap();
        let b = bootstrap_ci(&hv, &groups, &map, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        let flipped: Vec<u8> = groups.iter().map(|g| 1 - g).collect();
        let s = bootstrap_ci(&hv, &flipped, &map.swapped(), &cfg).unwrap();
        let (x, y) = (&a.results[0], &s.results[0]);
        prop_assert!((x.point.delta_gap + y.point.delta_gap).abs() < 1e-12);
        prop_assert!((x.ci_low + y.ci_high).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn person_period_rows_follow_definitions(seed in any::<u64>(), n in 10usize..60) {
        let c = generate(&SynthSpec { n_enrollments: n, max_weeks: 20, seed, ..Default::default() }).unwrap();
        let b = build_backbone(&c.raw).unwrap();
        let t = build_person_period(&b.enrollments, &WeeklyActivity::from_raw(&c.raw));
        let expected: usize = b.enrollments.iter().map(|e| e.t_final as usize + 1).sum();
        prop_assert_eq!(t.n_rows(), expected);
        for u in 0..t.n_enrollments() {
            let rows = t.rows_of(u);
            let e = &t.enrollments[u];
            let active: Vec<bool> = rows.iter().map(|r| r.total_clicks > 0.0).collect();
            for (k, r) in rows.iter().enumerate() {
                prop_assert_eq!(r.t as usize, k);
                prop_assert_eq!(r.active, active[k]);
                prop_assert_eq!((r.recency, r.streak), counters(&active, k));
                prop_assert_eq!(r.event, e.event && r.t == e.t_final);
            }
        }
    }

    #[test]
    fn split_partitions_enrollments_once(seed in any::<u64>(), n in 20usize..120, k in 2usize..6) {
        let c = generate(&SynthSpec { n_enrollments: n, max_weeks: 20, seed, ..Default::default() }).unwrap();
        let b = build_backbone(&c.raw).unwrap();
        let mut s = stratified_split(&b.enrollments, 4, 0.3, seed).unwrap();
        assign_folds(&mut s, k, seed).unwrap();
        prop_assert_eq!(s.assignments.len(), b.enrollments.len());
        let mut keys: Vec<_> = s.assignments.iter().map(|a| &a.key).collect();
        keys.sort();
        keys.dedup();
        prop_assert_eq!(keys.len(), b.enrollments.len());
        for a in &s.assignments {
            prop_assert_eq!(a.fold.is_some(), a.partition == Partition::Train);
            prop_assert!(a.fold.is_none_or(|f| f < k));
        }
    }
}
