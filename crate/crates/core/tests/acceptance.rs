//! Acceptance battery. Prints one line per criterion and exits nonzero if
//! any criterion fails. Criterion 5 needs the reference dataset in
//! `OULAD_DIR` and is skipped otherwise.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use weekhaz_core::config::RunConfig;
use weekhaz_core::hazard::codec::FeatureCodec;
use weekhaz_core::hazard::features::{FeatureRow, FeatureSet};
use weekhaz_core::hazard::logistic::Objective;
use weekhaz_core::hazard::{survival_curves, HazardModel};
use weekhaz_core::ingestion::{build_backbone, Enrollment, EnrollmentKey, FinalResult, RawTables, Statics, WeeklyActivity};
use weekhaz_core::leakage::{check_leakage, default_cutoffs};
use weekhaz_core::metrics::{auc, brier_ipcw, cindex, cindex_td, horizon_labels, Outcome};
use weekhaz_core::person_period::{build_person_period, PersonPeriodRow, PersonPeriodTable};
use weekhaz_core::pipeline;
use weekhaz_core::policy::contrast::{mean_survival, scenario_contrast};
use weekhaz_core::policy::grid::sensitivity_grid;
use weekhaz_core::policy::mech::mech_rescore;
use weekhaz_core::policy::{compute_activation, shock_rescore, DecayType, Trigger};
use weekhaz_core::splitting::{Partition, PartitionedTables};
use weekhaz_core::subgroup::{delta_gap, survival_at, GroupMap};
use weekhaz_core::synth::{generate, write_raw_tables, SynthSpec};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Verdict;

fn ensure(ok: bool, fails: &mut Vec<String>, msg: impl Into<String>) {
    if !ok {
        fails.push(msg.into());
    }
}

fn verdict(fails: Vec<String>, detail: String) -> Verdict {
    if fails.is_empty() {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(format!("{}; {detail}", fails.join("; ")))
    }
}

fn cohort(spec: &SynthSpec) -> (RawTables, PersonPeriodTable) {
    let c = generate(spec).expect("synthetic cohort");
    let b = build_backbone(&c.raw).expect("backbone");
    let t = build_person_period(&b.enrollments, &WeeklyActivity::from_raw(&c.raw));
    (c.raw, t)
}

fn fitted(t: &PersonPeriodTable, cfg: &RunConfig) -> (PartitionedTables, HazardModel) {
    let s = pipeline::split(t, cfg, None).expect("split");
    let (parts, folds) = pipeline::partitions(t, &s).expect("partitions");
    let (m, _) = pipeline::train(&parts, &folds, cfg).expect("train");
    (parts, m)
}

// ---------------------------------------------------------------- 1

struct Tiny {
    gender: &'static str,
    event: bool,
    recency: Vec<u32>,
    h: Vec<f64>,
    g: Vec<f64>,
}

fn tiny_cohort() -> Vec<Tiny> {
    vec![
        Tiny { gender: "F", event: true, recency: vec![0, 1], h: vec![0.10, 0.25], g: vec![0.05, 0.05] },
        Tiny { gender: "M", event: false, recency: vec![1, 2, 0, 1], h: vec![0.05, 0.30, 0.15, 0.20], g: vec![0.6, 0.7, 0.8, 0.1] },
        Tiny { gender: "F", event: false, recency: vec![0, 0, 1], h: vec![0.12, 0.07, 0.33], g: vec![0.10, 0.20, 0.30] },
        Tiny { gender: "M", event: true, recency: vec![0, 1, 2, 3], h: vec![0.09, 0.18, 0.27, 0.40], g: vec![0.02, 0.03, 0.04, 0.05] },
        Tiny { gender: "F", event: false, recency: vec![2], h: vec![0.22], g: vec![0.15] },
    ]
}

fn tiny_table(units: &[Tiny]) -> PersonPeriodTable {
    PersonPeriodTable::from_rows(
        units
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let tf = u.h.len() as u32 - 1;
                let e = Enrollment {
                    key: EnrollmentKey::new(i as i64 + 1, "AAA", "2013J"),
                    final_result: if u.event { FinalResult::Withdrawn } else { FinalResult::Pass },
                    date_unregistration: u.event.then_some(7 * tf as i64),
                    event: u.event,
                    t_event: u.event.then_some(tf),
                    t_last_obs: tf,
                    t_final: tf,
                    statics: Statics {
                        gender: u.gender.into(),
                        highest_education: "A Level".into(),
                        age_band: "0-35".into(),
                        num_of_prev_attempts: 0.0,
                        studied_credits: 60.0,
                    },
                };
                let rows = u
                    .recency
                    .iter()
                    .enumerate()
                    .map(|(t, &r)| PersonPeriodRow {
                        t: t as u32,
                        total_clicks: if r == 0 { 5.0 } else { 0.0 },
                        recency: r,
                        streak: 0,
                        submitted_this_week: false,
                        active: r == 0,
                        event: u.event && t as u32 == tf,
                    })
                    .collect();
                (e, rows)
            })
            .collect(),
    )
}

/// Survival by explicit product, carried forward past the last week.
fn brute_survival(h: &[f64], t: u32) -> f64 {
    let last = (t as usize).min(h.len() - 1);
    h[..=last].iter().fold(1.0, |s, &x| s * (1.0 - x))
}

/// Policy hazards by the trigger rule written out directly: first week with
/// recency ≥ r*, window of W weeks, event rows untouched.
fn brute_policy(u: &Tiny, r_star: u32, w: u32, delta: f64) -> Vec<f64> {
    let tf = u.h.len() - 1;
    let start = u.recency.iter().position(|&r| r >= r_star);
    (0..u.h.len())
        .map(|t| {
            let on = start.is_some_and(|s| t >= s && t < s + w as usize) && !(u.event && t == tf);
            if on {
                u.h[t] * (1.0 - delta)
            } else {
                u.h[t]
            }
        })
        .collect()
}

fn brute_weight(u: &Tiny, t: u32, g_min: f64, cap: f64) -> (bool, f64) {
    let time = u.h.len() as u32 - 1;
    let g = if u.event && time <= t {
        Some(if time == 0 { 1.0 } else { brute_survival(&u.g, time - 1) })
    } else if time > t {
        Some(brute_survival(&u.g, t))
    } else {
        None
    };
    let y = u.event && time <= t;
    (y, g.map_or(0.0, |g| (1.0 / g.max(g_min)).min(cap)))
}

fn brute_cindex(risk: &[f64], units: &[Tiny], w: &[f64], t: u32, td: Option<&[Vec<f64>]>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, ui) in units.iter().enumerate() {
        let ti = ui.h.len() as u32 - 1;
        if !(ui.event && ti <= t) {
            continue;
        }
        for (j, uj) in units.iter().enumerate() {
            let tj = uj.h.len() as u32 - 1;
            if i == j || !(tj > ti || (tj == ti && !uj.event)) {
                continue;
            }
            let (a, b) = match td {
                Some(h) => (1.0 - brute_survival(&h[i], ti), 1.0 - brute_survival(&h[j], ti)),
                None => (risk[i], risk[j]),
            };
            num += w[i] * if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            den += w[i];
        }
    }
    num / den
}

fn criterion_1() -> Verdict {
    let units = tiny_cohort();
    let table = tiny_table(&units);
    let mut fails = Vec::new();
    let tol = 1e-12;
    let close = |a: f64, b: f64| (a - b).abs() <= tol;
    let (r_star, w, delta) = (1, 2, 0.2);
    let (g_min, cap) = (0.05, 10.0);

    let h0: Vec<f64> = units.iter().flat_map(|u| u.h.iter().copied()).collect();
    let act = compute_activation(
        &table,
        &Trigger { r_star, window_w: w, window_exclusive_upper: true, retrigger: false },
    );
    let h1 = shock_rescore(&h0, &act, delta);
    let p_brute: Vec<Vec<f64>> = units.iter().map(|u| brute_policy(u, r_star, w, delta)).collect();
    let h1_brute: Vec<f64> = p_brute.iter().flatten().copied().collect();
    ensure(h1 == h1_brute, &mut fails, "policy hazards differ from the brute-force trigger rule");

    let c0 = survival_curves(&table, &h0);
    let c1 = survival_curves(&table, &h1);
    let contrast = scenario_contrast("tiny", &table, &h0, &h1, 2, 3).expect("contrast");
    let n = units.len() as f64;
    let map = GroupMap::parse("gender", "F=1,M=0").expect("map");
    let groups = map.indicators(&table.enrollments).expect("groups");
    let outcomes: Vec<Outcome> = table.enrollments.iter().map(Outcome::primary).collect();
    let g_curves = survival_curves(&table, &units.iter().flat_map(|u| u.g.iter().copied()).collect::<Vec<_>>());
    let keys: Vec<EnrollmentKey> = table.enrollments.iter().map(|e| e.key.clone()).collect();
    let mut checked = 0;

    for t in 0..=3u32 {
        for (i, u) in units.iter().enumerate() {
            ensure(close(c0[i].at(t), brute_survival(&u.h, t)), &mut fails, format!("S0 unit {i} week {t}"));
            ensure(close(c1[i].at(t), brute_survival(&p_brute[i], t)), &mut fails, format!("S1 unit {i} week {t}"));
            checked += 2;
        }
        let m0 = units.iter().map(|u| brute_survival(&u.h, t)).sum::<f64>() / n;
        let m1 = p_brute.iter().map(|h| brute_survival(h, t)).sum::<f64>() / n;
        ensure(close(contrast.weekly[t as usize].delta, m1 - m0), &mut fails, format!("ΔS week {t}"));

        let mean_of = |hs: &[&Vec<f64>], g: &str| {
            let sel: Vec<f64> = units
                .iter()
                .zip(hs)
                .filter(|(u, _)| u.gender == g)
                .map(|(_, h)| brute_survival(h, t))
                .collect();
            sel.iter().sum::<f64>() / sel.len() as f64
        };
        let base: Vec<&Vec<f64>> = units.iter().map(|u| &u.h).collect();
        let pol: Vec<&Vec<f64>> = p_brute.iter().collect();
        let gap0 = mean_of(&base, "F") - mean_of(&base, "M");
        let gap1 = mean_of(&pol, "F") - mean_of(&pol, "M");
        let gp = delta_gap(&survival_at(&c0, t), &survival_at(&c1, t), &groups, &map).expect("gap");
        ensure(close(gp.gap_baseline, gap0), &mut fails, format!("Gap0 week {t}"));
        ensure(close(gp.gap_policy, gap1), &mut fails, format!("Gap1 week {t}"));
        ensure(close(gp.delta_gap, gap1 - gap0), &mut fails, format!("ΔGap week {t}"));

        let labels = horizon_labels(&keys, &outcomes, &c0, &g_curves, t, g_min, cap).expect("labels");
        let mut num = 0.0;
        let mut wts = Vec::new();
        for (u, l) in units.iter().zip(&labels) {
            let (y, w) = brute_weight(u, t, g_min, cap);
            let p = 1.0 - brute_survival(&u.h, t);
            num += w * (f64::from(u8::from(y)) - p).powi(2);
            ensure(close(l.w, w), &mut fails, format!("weight week {t}"));
            wts.push(if y { w } else { 1.0 });
        }
        let bs = brier_ipcw(&labels).expect("brier");
        ensure(close(bs.per_n, num / n), &mut fails, format!("Brier week {t}"));

        if units.iter().any(|u| u.event && u.h.len() as u32 - 1 <= t) {
            let risk: Vec<f64> = units.iter().map(|u| 1.0 - brute_survival(&u.h, t)).collect();
            let c = cindex(&risk, &outcomes, &wts, t).expect("cindex");
            ensure(close(c.cindex, brute_cindex(&risk, &units, &wts, t, None)), &mut fails, format!("C week {t}"));
            let hs: Vec<Vec<f64>> = units.iter().map(|u| u.h.clone()).collect();
            let ctd = cindex_td(&c0, &outcomes, &wts, t).expect("cindex_td");
            ensure(close(ctd.cindex, brute_cindex(&risk, &units, &wts, t, Some(&hs))), &mut fails, format!("C_td week {t}"));
            checked += 2;
        }
        checked += 6;
    }
    verdict(fails, format!("{checked} quantities match at 1e-12"))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Verdict {
    let (_, t) = cohort(&SynthSpec { n_enrollments: 150, seed: 5, ..Default::default() });
    let rows = || (0..t.n_rows()).map(|r| FeatureRow::from_table(&t, r));
    let codec = FeatureCodec::fit(&FeatureSet::full(), rows()).expect("codec");
    let design = codec.encode(rows());
    let obj = Objective::new(&design, &t.event, 1.0).expect("objective");
    let p = obj.n_params();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let theta: Vec<f64> = (0..p).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let g = obj.gradient(&theta);
        let mut fd = vec![0.0; p];
        for k in 0..p {
            let h = 1e-5 * theta[k].abs().max(1.0);
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[k] += h;
            b[k] -= h;
            fd[k] = (obj.value(&a) - obj.value(&b)) / (2.0 * h);
        }
        let diff = g.iter().zip(&fd).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(diff / norm);
    }
    let detail = format!("{p} parameters, 10 points, max relative error {worst:.2e}");
    if worst <= 1e-5 {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Verdict {
    let cfg = RunConfig::default();
    let (_, t) = cohort(&SynthSpec { n_enrollments: 500, seed: 3, ..Default::default() });
    let (parts, model) = fitted(&t, &cfg);
    let test = &parts.test;
    let base = model.predict_hazards(test);
    let grid = &cfg.policy.grid;
    let h = &cfg.horizons;
    let mut fails = Vec::new();

    let mut deltas = grid.delta_shock.clone();
    deltas.sort_by(f64::total_cmp);
    let s0 = mean_survival(test, &base, h.t_eval_policy);
    let mut triggers = 0;
    for &r in &grid.r_star {
        for &w in &grid.window_w {
            let act = compute_activation(
                test,
                &Trigger { r_star: r, window_w: w, window_exclusive_upper: grid.window_exclusive_upper, retrigger: false },
            );
            let mut prev = vec![0.0; s0.len()];
            for &d in &deltas {
                let s1 = mean_survival(test, &shock_rescore(&base, &act, d), h.t_eval_policy);
                for (k, (a, b)) in s1.iter().zip(&s0).enumerate() {
                    let ds = a - b;
                    ensure(ds >= 0.0, &mut fails, format!("ΔS<0 r*={r} W={w} δ={d} week {k}"));
                    ensure(ds >= prev[k], &mut fails, format!("ΔS not monotone r*={r} W={w} δ={d} week {k}"));
                    prev[k] = ds;
                }
            }
            let m = mech_rescore(&model, test, &base, &act, DecayType::Kb2023Step2w, 0.0, 0.0).expect("mech");
            let same = m.hazards.iter().zip(&base).all(|(a, b)| a.to_bits() == b.to_bits());
            ensure(same, &mut fails, format!("mech α=0 differs from baseline r*={r} W={w}"));
            triggers += 1;
        }
    }

    let rows = sensitivity_grid(&model, test, &base, grid, h.t_policy, h.t_eval_policy).expect("grid");
    ensure(rows.len() == 216, &mut fails, format!("grid has {} rows", rows.len()));
    for r in &rows {
        ensure(
            r.shock_delta_t_policy >= 0.0 && r.shock_delta_t_eval_policy >= 0.0,
            &mut fails,
            format!("grid config {} negative shock ΔS", r.config_id),
        );
        for q in rows.iter().filter(|q| {
            (q.r_star, q.window_w, q.decay_type, q.alpha_week0.to_bits(), q.alpha_week1.to_bits())
                == (r.r_star, r.window_w, r.decay_type, r.alpha_week0.to_bits(), r.alpha_week1.to_bits())
                && q.delta_shock > r.delta_shock
        }) {
            ensure(
                q.shock_delta_t_policy >= r.shock_delta_t_policy && q.shock_delta_t_eval_policy >= r.shock_delta_t_eval_policy,
                &mut fails,
                format!("grid configs {} -> {} not monotone in δ", r.config_id, q.config_id),
            );
        }
    }
    verdict(
        fails,
        format!("{triggers} triggers × {} δ weekly to week {}, {} grid rows, α=0 bit-exact", deltas.len(), h.t_eval_policy, rows.len()),
    )
}

// ---------------------------------------------------------------- 4

fn row_auc_and_mean(spec: &SynthSpec) -> (f64, f64) {
    let cfg = RunConfig::default();
    let (_, t) = cohort(spec);
    let (parts, model) = fitted(&t, &cfg);
    let p = model.predict_hazards(&parts.test);
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    (auc(&p, &parts.test.event).expect("auc"), mean)
}

fn criterion_4() -> Verdict {
    let mut fails = Vec::new();
    let (a0, m0) = row_auc_and_mean(&SynthSpec::constant(5000, 40, 0.1, 7));
    ensure((m0 - 0.1).abs() <= 0.01, &mut fails, format!("constant-hazard mean {m0:.4}"));
    ensure((a0 - 0.5).abs() <= 0.02, &mut fails, format!("constant-hazard AUC {a0:.4}"));
    let mut strong = SynthSpec { n_enrollments: 2000, seed: 8, ..Default::default() };
    strong.effects = [("inactive".to_string(), 3.0)].into_iter().collect();
    let (a1, _) = row_auc_and_mean(&strong);
    ensure(a1 >= 0.75, &mut fails, format!("strong-effect AUC {a1:.4}"));
    verdict(
        fails,
        format!("null: mean hazard {m0:.4}, AUC {a0:.4}; strong effect: AUC {a1:.4}"),
    )
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Verdict {
    let Some(dir) = std::env::var_os("OULAD_DIR") else {
        return Verdict::Skip("OULAD_DIR not set".into());
    };
    let cfg = RunConfig::default();
    let mut fails = Vec::new();
    let (raw, report) = match pipeline::ingest(Path::new(&dir), "csv") {
        Ok(x) => x,
        Err(e) => return Verdict::Fail(format!("ingest: {e}")),
    };
    drop(raw);
    let n_enr = report.enrollments.len();
    ensure(n_enr == 32_593, &mut fails, format!("enrollments {n_enr}"));
    ensure(report.unique_students == 28_785, &mut fails, format!("students {}", report.unique_students));
    let (raw, _) = pipeline::ingest(Path::new(&dir), "csv").expect("ingest");
    let t = pipeline::person_period(&raw, &report);
    drop(raw);
    ensure(t.n_rows() == 775_295, &mut fails, format!("rows {}", t.n_rows()));

    let s = pipeline::split(&t, &cfg, None).expect("split");
    let (ntr, nte) = (s.count(Partition::Train), s.count(Partition::Test));
    ensure(ntr.abs_diff(22_815) <= 20 && nte.abs_diff(9_778) <= 20, &mut fails, format!("split {ntr}/{nte}"));
    let (parts, folds) = pipeline::partitions(&t, &s).expect("partitions");
    let (model, _) = pipeline::train(&parts, &folds, &cfg).expect("train");
    let a = auc(&model.predict_hazards(&parts.test), &parts.test.event).expect("auc");
    ensure((a - 0.8405).abs() <= 0.03, &mut fails, format!("AUC {a:.4}"));

    let cens = pipeline::censoring(&parts, &folds, &cfg, weekhaz_core::censoring::AnchorVariant::LastObs).expect("censoring");
    let h = cens.view.horizons;
    let g18 = cens.view.g_marginal.get(18).copied().unwrap_or(f64::NAN);
    ensure((g18 - 0.7958).abs() <= 0.05, &mut fails, format!("G(18) {g18:.4}"));
    ensure(h.t_eval_metrics == 37, &mut fails, format!("T_eval_metrics {}", h.t_eval_metrics));

    let (baseline, run) = pipeline::simulate(&model, &parts.test, &h, &cfg).expect("simulate");
    let mut ds = Vec::new();
    for (id, want, tol) in [("shock_anchored", 0.0102, 0.005), ("shock_hyp_a", 0.0260, 0.010), ("shock_hyp_b", 0.0819, 0.020)] {
        let got = run.outcome(id).map_or(f64::NAN, |o| o.contrast.delta_t_policy);
        ensure((got - want).abs() <= tol, &mut fails, format!("ΔS(18) {id} {got:.4}"));
        ds.push(format!("{got:.4}"));
    }

    let tmp = tempfile::tempdir().expect("tempdir");
    weekhaz_core::curves::write_curves_dir(tmp.path(), &parts.test, &baseline, &run, &h).expect("curves");
    let gaps = pipeline::subgroup(tmp.path(), &cfg).expect("subgroup");
    let g = gaps.results.iter().find(|r| r.week == h.t_policy).expect("gap at T_policy");
    let dg = g.point.delta_gap;
    ensure(dg < 0.0 && g.excludes_zero() && dg.abs() < 0.005, &mut fails, format!("ΔGap(18) {dg:.5} [{:.5}, {:.5}]", g.ci_low, g.ci_high));

    verdict(
        fails,
        format!(
            "{n_enr} enrollments, {} rows, split {ntr}/{nte}, AUC {a:.4}, G(18) {g18:.4}, T_eval_metrics {}, ΔS(18) {}, ΔGap(18) {dg:.5}",
            t.n_rows(),
            h.t_eval_metrics,
            ds.join("/")
        ),
    )
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Verdict {
    let tmp = tempfile::tempdir().expect("tempdir");
    let data = tmp.path().join("data");
    std::fs::create_dir_all(&data).expect("data dir");
    let c = generate(&SynthSpec { n_enrollments: 600, seed: 6, ..Default::default() }).expect("cohort");
    write_raw_tables(&data, &c).expect("raw tables");
    let run = |name: &str| {
        let mut cfg = RunConfig::default();
        cfg.paths.data_dir = data.clone();
        cfg.paths.out_root = tmp.path().join(name);
        cfg.subgroup.bootstrap.replicates = 500;
        cfg
    };
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().expect("pool");
    let a = match pool(4).install(|| pipeline::run_all(&run("a"))) {
        Ok(m) => m,
        Err(e) => return Verdict::Fail(format!("first run: {e}")),
    };
    let b = match pool(1).install(|| pipeline::run_all(&run("b"))) {
        Ok(m) => m,
        Err(e) => return Verdict::Fail(format!("second run: {e}")),
    };
    let differ: Vec<&str> = a
        .files
        .iter()
        .zip(&b.files)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.path.as_str())
        .collect();
    let mut fails = Vec::new();
    ensure(a.files.len() == b.files.len(), &mut fails, format!("{} vs {} files", a.files.len(), b.files.len()));
    ensure(differ.is_empty(), &mut fails, format!("digests differ: {}", differ.join(", ")));
    verdict(fails, format!("{} files identical across 4-thread and 1-thread runs, B=500", a.files.len()))
}

// ---------------------------------------------------------------- 7

fn leakage_on(name: &str, raw: &RawTables, t: &PersonPeriodTable, fails: &mut Vec<String>) -> usize {
    let cfg = RunConfig::default();
    let mut checks = 0;
    let cut = default_cutoffs(t);
    let s = pipeline::split(t, &cfg, None).expect("split");
    let r = check_leakage(t, raw, &s, &cut);
    ensure(r.passed(), fails, format!("{name} stratified: {r:?}"));
    checks += 1;
    let runs: std::collections::BTreeSet<(String, String)> = t.enrollments.iter().map(|e| e.key.run()).collect();
    if let Some((m, p)) = runs.iter().next() {
        let s = pipeline::split(t, &cfg, Some((m, p))).expect("holdout split");
        let r = check_leakage(t, raw, &s, &cut);
        ensure(r.passed(), fails, format!("{name} holdout {m}/{p}: {r:?}"));
        checks += 1;
    }
    checks
}

fn criterion_7() -> Verdict {
    let mut fails = Vec::new();
    let mut checks = 0;
    let specs = [
        ("default-1", SynthSpec { n_enrollments: 300, seed: 1, ..Default::default() }),
        ("default-2", SynthSpec { n_enrollments: 300, seed: 2, ..Default::default() }),
        ("constant", SynthSpec::constant(300, 30, 0.05, 3)),
        ("censored", SynthSpec { n_enrollments: 300, censoring_rate: 0.15, seed: 4, ..Default::default() }),
    ];
    for (name, spec) in &specs {
        let (raw, t) = cohort(spec);
        checks += leakage_on(name, &raw, &t, &mut fails);
    }
    let mut datasets = specs.len();
    if let Some(dir) = std::env::var_os("OULAD_DIR") {
        let (raw, report) = pipeline::ingest(Path::new(&dir), "csv").expect("ingest");
        let t = pipeline::person_period(&raw, &report);
        checks += leakage_on("OULAD", &raw, &t, &mut fails);
        datasets += 1;
    }
    verdict(fails, format!("{checks} splits on {datasets} datasets clean"))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check, Duration); 7] = [
        ("brute-force oracle", criterion_1, Duration::from_secs(1)),
        ("gradient check", criterion_2, Duration::from_secs(60)),
        ("policy invariants", criterion_3, Duration::from_secs(120)),
        ("synthetic recovery", criterion_4, Duration::from_secs(300)),
        ("reference reproduction", criterion_5, Duration::from_secs(900)),
        ("determinism", criterion_6, Duration::from_secs(600)),
        ("leakage", criterion_7, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = f();
        let secs = start.elapsed().as_secs_f64();
        let over = start.elapsed() > *budget;
        let (tag, detail) = match v {
            Verdict::Pass(d) if over => ("FAIL", format!("{d}; over the {}s budget", budget.as_secs())),
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => ("FAIL", d),
            Verdict::Skip(d) => ("SKIP", d),
        };
        failed += usize::from(tag == "FAIL");
        println!("criterion {} [{name}]: {tag} ({detail}) in {secs:.2}s", i + 1);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
