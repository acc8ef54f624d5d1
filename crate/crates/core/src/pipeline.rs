//! Stage functions behind the CLI and the end-to-end `run_all`.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::censoring::{
    anchor_sensitivity, censoring_curves, compute_horizons, fit_censoring, marginal_curve, row_weight_stats,
    AnchorRow, AnchorVariant, CensoringModel, HorizonConfig, WeightStats,
};
use crate::config::RunConfig;
use crate::csvio::{fmt_f64, TableWriter};
use crate::curves::{read_curves_dir, subgroup_gaps, write_curves_dir};
use crate::endpoint::Endpoint;
use crate::error::{Error, Result};
use crate::evaluation::{
    ablation, calibration_bins, endpoint_rows, evaluate_external, group_diagnostics, holdout_runs, largest_runs,
    model_summary_rows, read_external_scores, row_metrics, standard_horizons, write_anchor_table,
    write_censoring_tables, write_evaluation_tables, EvalContext, EvaluationReport, ECE_BINS,
};
use crate::hazard::{predict_hazards, require_folds, CalibrationReport, HazardModel, SurvivalCurve, Variant};
use crate::ingestion::{build_backbone, load_raw_tables, BackboneReport, DataFiles, RawTables, WeeklyActivity};
use crate::person_period::{build_person_period, PersonPeriodTable};
use crate::policy::export::{run_policy, write_policy_tables, PolicyRun};
use crate::splitting::{
    assign_folds, holdout_run_split, leaked_keys, partition_table, stratified_split, Partition, PartitionedTables,
    SplitResult,
};
use crate::subgroup::{write_subgroup_tables, BootstrapRun};

/// Failure of one pipeline stage.
#[derive(Debug, thiserror::Error)]
#[error("stage `{stage}` failed [{}]: {source}", source.code())]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: Error,
}

impl StageError {
    pub fn code(&self) -> &'static str {
        self.source.code()
    }
}

pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

pub fn ingest(data_dir: &Path, extension: &str) -> Result<(RawTables, BackboneReport)> {
    let raw = load_raw_tables(&DataFiles::new(data_dir).with_extension(extension))?;
    let report = build_backbone(&raw)?;
    info!(
        "{} enrollments, {} students, {} events",
        report.enrollments.len(),
        report.unique_students,
        report.enrollments.iter().filter(|e| e.event).count()
    );
    Ok((raw, report))
}

pub const INGEST_TABLE: &str = "table_ingest_report.csv";
pub const COHORT_TABLE: &str = "table_cohort_summary.csv";
pub const SPLIT_TABLE: &str = "table_split_counts.csv";
pub const STRATA_TABLE: &str = "table_split_strata.csv";
pub const COEF_TABLE: &str = "table_model_coefficients.csv";
pub const TRAIN_TABLE: &str = "table_training_summary.csv";

fn write_kv(path: &Path, rows: Vec<(&str, String)>) -> Result<()> {
    let mut w = TableWriter::create(path, &["quantity", "value"])?;
    for (k, v) in rows {
        w.row([k.to_string(), v])?;
    }
    w.finish()
}

pub fn write_ingest_table(dir: &Path, r: &BackboneReport) -> Result<PathBuf> {
    let p = dir.join(INGEST_TABLE);
    write_kv(
        &p,
        vec![
            ("enrollments", r.enrollments.len().to_string()),
            ("unique_students", r.unique_students.to_string()),
            ("events", r.enrollments.iter().filter(|e| e.event).count().to_string()),
            ("duplicate_student_info", r.duplicate_student_info.to_string()),
            ("duplicate_registrations", r.duplicate_registrations.to_string()),
            ("orphan_rows", r.orphan_rows.to_string()),
            ("withdrawn_without_date", r.withdrawn_without_date.to_string()),
        ],
    )?;
    Ok(p)
}

pub fn person_period(raw: &RawTables, report: &BackboneReport) -> PersonPeriodTable {
    build_person_period(&report.enrollments, &WeeklyActivity::from_raw(raw))
}

pub fn write_cohort_table(dir: &Path, t: &PersonPeriodTable) -> Result<PathBuf> {
    let students: std::collections::BTreeSet<i64> = t.enrollments.iter().map(|e| e.key.id_student).collect();
    let p = dir.join(COHORT_TABLE);
    write_kv(
        &p,
        vec![
            ("enrollments", t.n_enrollments().to_string()),
            ("unique_students", students.len().to_string()),
            ("events", t.n_events().to_string()),
            ("censored", (t.n_enrollments() - t.n_events()).to_string()),
            ("person_period_rows", t.n_rows().to_string()),
            ("max_week", t.week.iter().max().map_or(0, |&w| w).to_string()),
            ("row_event_rate", fmt_f64(t.n_events() as f64 / t.n_rows().max(1) as f64)),
        ],
    )?;
    Ok(p)
}

/// Stratified split, or the leave-one-run-out split for `holdout`; folds
/// are assigned to train enrollments either way.
pub fn split(t: &PersonPeriodTable, cfg: &RunConfig, holdout: Option<(&str, &str)>) -> Result<SplitResult> {
    let mut s = match holdout {
        Some((m, p)) => holdout_run_split(&t.enrollments, m, p)?,
        None => stratified_split(&t.enrollments, cfg.split.q, cfg.split.test_size, cfg.seed)?,
    };
    assign_folds(&mut s, cfg.calibration.k, cfg.seed)?;
    let leaked = leaked_keys(&s);
    if !leaked.is_empty() {
        return Err(Error::Contract(format!("{} enrollments in both partitions", leaked.len())));
    }
    Ok(s)
}

pub fn write_split_tables(dir: &Path, t: &PersonPeriodTable, s: &SplitResult) -> Result<Vec<PathBuf>> {
    let parts = partition_table(t, s)?;
    let p1 = dir.join(SPLIT_TABLE);
    let mut w = TableWriter::create(&p1, &["partition", "enrollments", "events", "rows", "row_event_rate"])?;
    for (name, tab) in [("train", &parts.train), ("test", &parts.test)] {
        w.row([
            name.to_string(),
            tab.n_enrollments().to_string(),
            tab.n_events().to_string(),
            tab.n_rows().to_string(),
            fmt_f64(tab.n_events() as f64 / tab.n_rows().max(1) as f64),
        ])?;
    }
    w.finish()?;

    let p2 = dir.join(STRATA_TABLE);
    let mut w = TableWriter::create(&p2, &["event", "bucket", "train", "test"])?;
    let mut counts: std::collections::BTreeMap<(bool, usize), [usize; 2]> = Default::default();
    for a in &s.assignments {
        let c = counts.entry((a.event, a.bucket)).or_default();
        c[usize::from(a.partition == Partition::Test)] += 1;
    }
    for ((event, bucket), c) in counts {
        w.row([u8::from(event).to_string(), bucket.to_string(), c[0].to_string(), c[1].to_string()])?;
    }
    w.finish()?;
    Ok(vec![p1, p2])
}

/// Train/test tables and the fold of each train enrollment.
pub type PartitionedTablesAndFolds = (PartitionedTables, Vec<usize>);

pub fn partitions(t: &PersonPeriodTable, s: &SplitResult) -> Result<PartitionedTablesAndFolds> {
    let parts = partition_table(t, s)?;
    let folds = require_folds(&parts.train_folds)?;
    Ok((parts, folds))
}

pub fn train(parts: &PartitionedTables, folds: &[usize], cfg: &RunConfig) -> Result<(HazardModel, CalibrationReport)> {
    crate::hazard::fit_event_model(&parts.train, folds, Variant::Full, &cfg.model.fit())
}

pub fn write_train_tables(dir: &Path, m: &HazardModel, r: &CalibrationReport) -> Result<Vec<PathBuf>> {
    let p1 = dir.join(COEF_TABLE);
    let mut w = TableWriter::create(&p1, &["term", "coefficient"])?;
    for (k, v) in model_summary_rows(m) {
        w.row([k, fmt_f64(v)])?;
    }
    w.finish()?;
    let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
    let p2 = dir.join(TRAIN_TABLE);
    write_kv(
        &p2,
        vec![
            ("variant", Variant::Full.name().to_string()),
            ("n_columns", m.codec.dim().to_string()),
            ("lambda", fmt_f64(m.lambda)),
            ("class_weight_negative", fmt_f64(m.class_weights.0)),
            ("class_weight_positive", fmt_f64(m.class_weights.1)),
            ("newton_iterations", r.iterations.to_string()),
            ("calibration_folds_used", join(&r.folds_used)),
            ("calibration_folds_skipped", join(&r.folds_skipped)),
            ("calibration_oof_rows", r.oof_rows.to_string()),
            ("calib_a", fmt_f64(m.calib_a)),
            ("calib_b", fmt_f64(m.calib_b)),
        ],
    )?;
    Ok(vec![p1, p2])
}

/// Censoring quantities on the test partition.
pub struct CensoringView {
    pub horizons: HorizonConfig,
    pub g_marginal: Vec<f64>,
    pub g_curves: Vec<SurvivalCurve>,
    pub weight_stats: WeightStats,
}

pub fn censoring_view(g: &CensoringModel, test: &PersonPeriodTable, cfg: &RunConfig) -> Result<CensoringView> {
    let hz = predict_hazards(g, test);
    let g_marginal = marginal_curve(test, &hz);
    let h = &cfg.horizons;
    let horizons = compute_horizons(&g_marginal, h.g_min, h.t_policy, h.t_eval_policy, h.weight_cap)?;
    let g_curves = censoring_curves(g, test);
    let g_rows: Vec<f64> = g_curves.iter().flat_map(|c| c.survival.iter().copied()).collect();
    let weight_stats = row_weight_stats(&g_rows, h.g_min, h.weight_cap);
    info!(
        "T_policy {} T_eval_metrics {} T_eval_policy {}",
        horizons.t_policy, horizons.t_eval_metrics, horizons.t_eval_policy
    );
    Ok(CensoringView {
        horizons,
        g_marginal,
        g_curves,
        weight_stats,
    })
}

pub struct CensoringStage {
    pub model: CensoringModel,
    pub view: CensoringView,
    pub anchors: Vec<AnchorRow>,
}

/// Fits the censoring model under `anchor` and runs the anchor sweep.
pub fn censoring(
    parts: &PartitionedTables,
    folds: &[usize],
    cfg: &RunConfig,
    anchor: AnchorVariant,
) -> Result<CensoringStage> {
    let fit = cfg.model.fit();
    let train = parts.train.trim_non_event_anchor(anchor.trim());
    let test = parts.test.trim_non_event_anchor(anchor.trim());
    let model = fit_censoring(&train, folds, &fit)?;
    let view = censoring_view(&model, &test, cfg)?;
    let anchors = cfg
        .evaluation
        .anchor_variants
        .iter()
        .map(|&v| anchor_sensitivity(&parts.train, &parts.test, folds, v, &fit, &view.horizons))
        .collect::<Result<_>>()?;
    Ok(CensoringStage { model, view, anchors })
}

pub fn write_censoring_stage(dir: &Path, c: &CensoringStage) -> Result<Vec<PathBuf>> {
    let mut out = write_censoring_tables(dir, &c.view.horizons, &c.view.g_marginal, &c.view.g_curves, &c.view.weight_stats)?;
    out.push(write_anchor_table(dir, &c.anchors)?);
    Ok(out)
}

pub fn evaluate(
    model: &HazardModel,
    view: &CensoringView,
    table: &PersonPeriodTable,
    parts: &PartitionedTables,
    folds: &[usize],
    cfg: &RunConfig,
    endpoints: &[Endpoint],
) -> Result<EvaluationReport> {
    let fit = cfg.model.fit();
    let hz_train = model.predict_hazards(&parts.train);
    let hz_test = model.predict_hazards(&parts.test);
    let curves = crate::hazard::survival_curves(&parts.test, &hz_test);
    let ctx = EvalContext {
        test: &parts.test,
        curves: &curves,
        g_curves: &view.g_curves,
        horizons: &view.horizons,
    };
    let mut eps = vec![Endpoint::Primary];
    eps.extend(endpoints.iter().copied().filter(|&e| e != Endpoint::Primary));
    let external = match &cfg.evaluation.external_scores {
        None => Vec::new(),
        Some(p) => read_external_scores(p)?
            .iter()
            .map(|s| evaluate_external(&ctx, s))
            .collect::<Result<_>>()?,
    };
    let holdout = if cfg.evaluation.holdout_runs > 0 {
        let runs = largest_runs(table, cfg.evaluation.holdout_runs);
        if runs.len() > 1 {
            holdout_runs(table, &runs, cfg.calibration.k, cfg.seed, &fit)?
        } else {
            Vec::new()
        }
    } else {
        Vec::new()
    };
    Ok(EvaluationReport {
        rows: vec![
            row_metrics("train", &hz_train, &parts.train.event),
            row_metrics("test", &hz_test, &parts.test.event),
        ],
        horizons: standard_horizons(&ctx, Endpoint::Primary)?,
        endpoints: endpoint_rows(&ctx, &eps)?,
        calibration: calibration_bins(&hz_test, &parts.test.event, ECE_BINS),
        group_column: cfg.evaluation.group_column.clone(),
        by_group: group_diagnostics(&parts.test, &hz_test, &cfg.evaluation.group_column)?,
        ablation: if cfg.evaluation.ablation {
            ablation(&parts.train, folds, &parts.test, &view.g_curves, &view.horizons, &fit)?
        } else {
            Vec::new()
        },
        holdout,
        external,
    })
}

pub fn simulate(
    model: &HazardModel,
    test: &PersonPeriodTable,
    horizons: &HorizonConfig,
    cfg: &RunConfig,
) -> Result<(Vec<f64>, PolicyRun)> {
    let baseline = model.predict_hazards(test);
    let run = run_policy(model, test, &baseline, &cfg.policy.scenarios, &cfg.policy.grid, horizons)?;
    Ok((baseline, run))
}

pub fn subgroup(curves_dir: &Path, cfg: &RunConfig) -> Result<BootstrapRun> {
    let c = read_curves_dir(curves_dir, &cfg.subgroup.scenario)?;
    subgroup_gaps(&c, &cfg.subgroup.group_map()?, &cfg.subgroup.bootstrap)
}

pub fn subgroup_note(h: &HorizonConfig) -> String {
    format!(
        "gap reported at T_policy={} and T_eval_metrics={}; policy trajectories run to T_eval_policy={}",
        h.t_policy, h.t_eval_metrics, h.t_eval_policy
    )
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "weekhaz-manifest";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
    pub horizons: Option<HorizonConfig>,
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digests every file, paths relative to `root`, sorted and deduplicated.
pub fn manifest_entries(root: &Path, files: &[PathBuf]) -> Result<Vec<ManifestEntry>> {
    let mut out: Vec<ManifestEntry> = files
        .iter()
        .map(|f| {
            let rel = f.strip_prefix(root).unwrap_or(f);
            let bytes = fs::metadata(f).map_err(|e| Error::io(f, e))?.len();
            Ok(ManifestEntry {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: sha256_file(f)?,
                bytes,
            })
        })
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| a.path.cmp(&b.path));
    out.dedup_by(|a, b| a.path == b.path);
    Ok(out)
}

pub fn write_manifest(root: &Path, m: &Manifest) -> Result<PathBuf> {
    let p = root.join(MANIFEST_FILE);
    fs::write(&p, serde_json::to_string_pretty(m)? + "\n").map_err(|e| Error::io(&p, e))?;
    Ok(p)
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let p = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Intermediate files of a run-all under `<out_root>/work`.
pub struct WorkFiles {
    pub enrollments: PathBuf,
    pub person_period: PathBuf,
    pub split: PathBuf,
    pub model: PathBuf,
    pub gmodel: PathBuf,
    pub curves: PathBuf,
}

impl WorkFiles {
    pub fn new(out_root: &Path) -> Self {
        let w = out_root.join("work");
        WorkFiles {
            enrollments: w.join("enrollments.csv"),
            person_period: w.join("person_period.csv"),
            split: w.join("split.csv"),
            model: w.join("model.json"),
            gmodel: w.join("gmodel.json"),
            curves: w.join("curves"),
        }
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Runs every stage in order and writes the manifest.
pub fn run_all(cfg: &RunConfig) -> std::result::Result<Manifest, StageError> {
    let root = cfg.paths.out_root.clone();
    let tables = cfg.tables_dir();
    let work = WorkFiles::new(&root);
    cfg.validate().stage("config")?;
    ensure_dir(&tables).stage("config")?;
    ensure_dir(work.enrollments.parent().expect("work dir")).stage("config")?;
    let mut files: Vec<PathBuf> = Vec::new();

    let (raw, report) = ingest(&cfg.paths.data_dir, &cfg.paths.data_extension).stage("ingest")?;
    crate::ingestion::write_enrollments(&work.enrollments, &report.enrollments).stage("ingest")?;
    files.push(work.enrollments.clone());
    files.push(write_ingest_table(&tables, &report).stage("ingest")?);

    let table = person_period(&raw, &report);
    crate::person_period::write_person_period(&work.person_period, &table).stage("build-person-period")?;
    files.push(work.person_period.clone());
    files.push(write_cohort_table(&tables, &table).stage("build-person-period")?);

    let s = split(&table, cfg, None).stage("split")?;
    crate::splitting::write_split(&work.split, &s).stage("split")?;
    files.push(work.split.clone());
    files.extend(write_split_tables(&tables, &table, &s).stage("split")?);
    let (parts, folds) = partitions(&table, &s).stage("split")?;

    let leak = crate::leakage::check_leakage(&table, &raw, &s, &crate::leakage::default_cutoffs(&table));
    drop(raw);
    files.push(crate::leakage::write_leakage_table(&tables, &leak).stage("leakage")?);
    crate::leakage::require_clean(&leak).stage("leakage")?;

    let (model, report) = train(&parts, &folds, cfg).stage("train")?;
    model.save(&work.model).stage("train")?;
    files.push(work.model.clone());
    files.extend(write_train_tables(&tables, &model, &report).stage("train")?);

    let cens = censoring(&parts, &folds, cfg, AnchorVariant::LastObs).stage("censoring")?;
    cens.model.save(&work.gmodel).stage("censoring")?;
    files.push(work.gmodel.clone());
    files.extend(write_censoring_stage(&tables, &cens).stage("censoring")?);
    let horizons = cens.view.horizons;

    let eval = evaluate(&model, &cens.view, &table, &parts, &folds, cfg, &[Endpoint::Composite]).stage("evaluate")?;
    files.extend(write_evaluation_tables(&tables, &eval).stage("evaluate")?);

    let (baseline, run) = simulate(&model, &parts.test, &horizons, cfg).stage("simulate-policy")?;
    files.extend(
        write_policy_tables(&tables, &run, &horizons, &cens.view.g_marginal, AnchorVariant::LastObs.name())
            .stage("simulate-policy")?,
    );
    files.extend(write_curves_dir(&work.curves, &parts.test, &baseline, &run, &horizons).stage("simulate-policy")?);

    let boot = subgroup(&work.curves, cfg).stage("subgroup")?;
    files.extend(
        write_subgroup_tables(&tables, &cfg.subgroup.scenario, &boot, &subgroup_note(&horizons)).stage("subgroup")?,
    );

    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: 1,
        config: cfg.clone(),
        horizons: Some(horizons),
        files: manifest_entries(&root, &files).stage("manifest")?,
    };
    write_manifest(&root, &manifest).stage("manifest")?;
    Ok(manifest)
}
