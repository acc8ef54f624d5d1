use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use weekhaz_core::censoring::HorizonConfig;
use weekhaz_core::hazard::{fit_event_model, FitConfig, Variant};
use weekhaz_core::ingestion::{build_backbone, WeeklyActivity};
use weekhaz_core::metrics::{cindex, Outcome};
use weekhaz_core::person_period::{build_person_period, PersonPeriodTable};
use weekhaz_core::policy::{default_catalog, export::run_policy, GridSpec};
use weekhaz_core::splitting::{grouped_kfold, stratified_split};
use weekhaz_core::subgroup::{bootstrap_ci, BootstrapConfig, GroupMap, HorizonValues};
use weekhaz_core::synth::{generate, SynthSpec};

fn cohort(n: usize) -> PersonPeriodTable {
    let c = generate(&SynthSpec {
        n_enrollments: n,
        ..Default::default()
    })
    .unwrap();
    let b = build_backbone(&c.raw).unwrap();
    build_person_period(&b.enrollments, &WeeklyActivity::from_raw(&c.raw))
}

fn horizons() -> HorizonConfig {
    HorizonConfig {
        t_policy: 18,
        t_eval_policy: 38,
        t_eval_metrics: 37,
        g_min: 0.05,
        weight_cap: 20.0,
    }
}

fn bench(c: &mut Criterion) {
    let t = cohort(2000);
    let folds = grouped_kfold(&t.enrollments.iter().map(|e| e.key.clone()).collect::<Vec<_>>(), 5, 42).unwrap();
    let cfg = FitConfig::default();

    c.bench_function("split_2000", |b| {
        b.iter(|| stratified_split(black_box(&t.enrollments), 4, 0.3, 42).unwrap())
    });

    let mut g = c.benchmark_group("fit");
    g.sample_size(10);
    g.bench_function("calibrated_hazard_2000", |b| {
        b.iter(|| fit_event_model(black_box(&t), &folds, Variant::Full, &cfg).unwrap())
    });
    g.finish();

    let (model, _) = fit_event_model(&t, &folds, Variant::Full, &cfg).unwrap();
    let baseline = model.predict_hazards(&t);
    c.bench_function("predict_2000", |b| b.iter(|| model.predict_hazards(black_box(&t))));

    let mut g = c.benchmark_group("policy");
    g.sample_size(10);
    g.bench_function("catalog_plus_grid_216", |b| {
        b.iter(|| run_policy(&model, &t, &baseline, &default_catalog(), &GridSpec::default(), &horizons()).unwrap())
    });
    g.finish();

    let curves = model.survival_curves(&t);
    let risk: Vec<f64> = curves.iter().map(|c| 1.0 - c.at(18)).collect();
    let outcomes: Vec<Outcome> = t.enrollments.iter().map(Outcome::primary).collect();
    let w = vec![1.0; risk.len()];
    c.bench_function("cindex_2000", |b| b.iter(|| cindex(black_box(&risk), &outcomes, &w, 18).unwrap()));

    let map = GroupMap::new("gender", "F", "M").unwrap();
    let groups = map.indicators(&t.enrollments).unwrap();
    let s0: Vec<f64> = curves.iter().map(|c| c.at(18)).collect();
    let hv = vec![HorizonValues {
        name: "T_policy".into(),
        week: 18,
        baseline: s0.clone(),
        policy: s0.iter().map(|s| (s + 0.01).min(1.0)).collect(),
    }];
    let mut g = c.benchmark_group("bootstrap");
    g.sample_size(10);
    g.bench_function("b500_2000", |b| {
        b.iter(|| bootstrap_ci(&hv, &groups, &map, &BootstrapConfig::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
