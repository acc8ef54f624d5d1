use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use weekhaz_core::censoring::{AnchorVariant, CensoringModel};
use weekhaz_core::config::RunConfig;
use weekhaz_core::curves::write_curves_dir;
use weekhaz_core::endpoint::Endpoint;
use weekhaz_core::evaluation::write_evaluation_tables;
use weekhaz_core::hazard::HazardModel;
use weekhaz_core::ingestion::{read_enrollments, write_enrollments, DataFiles, WeeklyActivity};
use weekhaz_core::person_period::{build_person_period, read_person_period, write_person_period, PersonPeriodTable};
use weekhaz_core::pipeline::{self, StageError};
use weekhaz_core::policy::export::write_policy_tables;
use weekhaz_core::splitting::{read_split, write_split};
use weekhaz_core::subgroup::write_subgroup_tables;
use weekhaz_core::synth::{generate, write_raw_tables, SynthSpec};
use weekhaz_core::Error;

#[derive(Parser)]
#[command(name = "weekhaz", version, about = "Weekly dropout hazard models, censoring-aware evaluation and policy simulation")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact root (overrides `paths.out_root`); tables go to `<root>/tables`.
    #[arg(long, global = true)]
    out_root: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort in the raw-table layout.
    Synthesize {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Build the enrollment backbone and endpoint fields.
    Ingest {
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Raw file extension.
        #[arg(long)]
        ext: Option<String>,
    },
    /// Expand enrollments into weekly person-period rows.
    BuildPersonPeriod {
        #[arg(long)]
        enrollments: PathBuf,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ext: Option<String>,
    },
    /// Enrollment-level train/test split with calibration folds.
    Split {
        #[arg(long)]
        pp: PathBuf,
        #[arg(long)]
        q: Option<usize>,
        #[arg(long)]
        test_size: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Put one run wholly in test: `module,presentation`.
        #[arg(long)]
        holdout_run: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the calibrated event-hazard model.
    Train {
        #[command(flatten)]
        data: SplitInputs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the censoring model and export horizon and anchor diagnostics.
    Censoring {
        #[command(flatten)]
        data: SplitInputs,
        #[arg(long)]
        out: PathBuf,
        /// last_obs (default), trim1 or trim2.
        #[arg(long, default_value = "last_obs")]
        anchor_variant: AnchorVariant,
    },
    /// Test-set metrics per horizon, ablation, held-out runs and endpoint sensitivity.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        gmodel: PathBuf,
        #[command(flatten)]
        data: SplitInputs,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Extra endpoint rows; the primary endpoint is always reported.
        #[arg(long)]
        endpoint: Vec<Endpoint>,
    },
    /// Shock and mechanism-aware scenarios plus the sensitivity grid.
    SimulatePolicy {
        #[arg(long)]
        model: PathBuf,
        /// Censoring model for horizon resolution; refit from the split when omitted.
        #[arg(long)]
        gmodel: Option<PathBuf>,
        #[command(flatten)]
        data: SplitInputs,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Where per-regime survival curves are written for `subgroup`.
        #[arg(long)]
        curves_dir: Option<PathBuf>,
    },
    /// Group gap change with bootstrap intervals.
    Subgroup {
        #[arg(long)]
        curves_dir: PathBuf,
        #[arg(long)]
        group: Option<String>,
        /// `level=indicator` pairs, e.g. `F=1,M=0`.
        #[arg(long)]
        map: Option<String>,
        #[arg(long = "B")]
        replicates: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        stratified: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Every stage in order, then the manifest.
    RunAll {
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SplitInputs {
    #[arg(long)]
    pp: PathBuf,
    #[arg(long)]
    split: PathBuf,
}

impl SplitInputs {
    fn load(&self) -> weekhaz_core::Result<(PersonPeriodTable, pipeline::PartitionedTablesAndFolds)> {
        let table = read_person_period(&self.pp)?;
        let s = read_split(&self.split)?;
        let parts = pipeline::partitions(&table, &s)?;
        Ok((table, parts))
    }
}

fn parent_dir(p: &Path) -> weekhaz_core::Result<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => pipeline::ensure_dir(d),
        _ => Ok(()),
    }
}

fn report(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn run(cli: Cli) -> Result<(), StageError> {
    use pipeline::StageContext;
    let mut cfg = RunConfig::load(cli.config.as_deref()).stage("config")?;
    if let Some(r) = cli.out_root {
        cfg.paths.out_root = r;
    }
    let tables = cfg.tables_dir();
    match cli.command {
        Command::Synthesize { spec, out_dir } => {
            let spec = match spec {
                Some(p) => SynthSpec::load(&p),
                None => Ok(SynthSpec {
                    seed: cfg.seed,
                    ..Default::default()
                }),
            }
            .stage("synthesize")?;
            let cohort = generate(&spec).stage("synthesize")?;
            report(&write_raw_tables(&out_dir, &cohort).stage("synthesize")?);
        }
        Command::Ingest { data_dir, out, ext } => {
            let dir = data_dir.unwrap_or(cfg.paths.data_dir.clone());
            let ext = ext.unwrap_or(cfg.paths.data_extension.clone());
            let (_, r) = pipeline::ingest(&dir, &ext).stage("ingest")?;
            parent_dir(&out).stage("ingest")?;
            write_enrollments(&out, &r.enrollments).stage("ingest")?;
            report(&[out, pipeline::write_ingest_table(&tables, &r).stage("ingest")?]);
        }
        Command::BuildPersonPeriod {
            enrollments,
            data_dir,
            out,
            ext,
        } => {
            const S: &str = "build-person-period";
            let es = read_enrollments(&enrollments).stage(S)?;
            let dir = data_dir.unwrap_or(cfg.paths.data_dir.clone());
            let ext = ext.unwrap_or(cfg.paths.data_extension.clone());
            let raw = weekhaz_core::ingestion::load_raw_tables(&DataFiles::new(dir).with_extension(&ext)).stage(S)?;
            let table = build_person_period(&es, &WeeklyActivity::from_raw(&raw));
            parent_dir(&out).stage(S)?;
            write_person_period(&out, &table).stage(S)?;
            report(&[out, pipeline::write_cohort_table(&tables, &table).stage(S)?]);
        }
        Command::Split {
            pp,
            q,
            test_size,
            seed,
            holdout_run,
            out,
        } => {
            cfg.split.q = q.unwrap_or(cfg.split.q);
            cfg.split.test_size = test_size.unwrap_or(cfg.split.test_size);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.validate().stage("config")?;
            let holdout = match &holdout_run {
                None => None,
                Some(s) => Some(s.split_once(',').ok_or_else(|| {
                    StageError {
                        stage: "split",
                        source: Error::Argument(format!("--holdout-run expects `module,presentation`, got `{s}`")),
                    }
                })?),
            };
            let table = read_person_period(&pp).stage("split")?;
            let s = pipeline::split(&table, &cfg, holdout.map(|(m, p)| (m.trim(), p.trim()))).stage("split")?;
            parent_dir(&out).stage("split")?;
            write_split(&out, &s).stage("split")?;
            let mut files = vec![out];
            files.extend(pipeline::write_split_tables(&tables, &table, &s).stage("split")?);
            report(&files);
        }
        Command::Train { data, out } => {
            let (_, (parts, folds)) = data.load().stage("train")?;
            let (model, r) = pipeline::train(&parts, &folds, &cfg).stage("train")?;
            parent_dir(&out).stage("train")?;
            model.save(&out).stage("train")?;
            let mut files = vec![out];
            files.extend(pipeline::write_train_tables(&tables, &model, &r).stage("train")?);
            report(&files);
        }
        Command::Censoring {
            data,
            out,
            anchor_variant,
        } => {
            let (_, (parts, folds)) = data.load().stage("censoring")?;
            let c = pipeline::censoring(&parts, &folds, &cfg, anchor_variant).stage("censoring")?;
            parent_dir(&out).stage("censoring")?;
            c.model.save(&out).stage("censoring")?;
            let mut files = vec![out];
            files.extend(pipeline::write_censoring_stage(&tables, &c).stage("censoring")?);
            report(&files);
        }
        Command::Evaluate {
            model,
            gmodel,
            data,
            out_dir,
            endpoint,
        } => {
            const S: &str = "evaluate";
            let (table, (parts, folds)) = data.load().stage(S)?;
            let m = HazardModel::load(&model).stage(S)?;
            let g = CensoringModel::load(&gmodel).stage(S)?;
            let view = pipeline::censoring_view(&g, &parts.test, &cfg).stage(S)?;
            let r = pipeline::evaluate(&m, &view, &table, &parts, &folds, &cfg, &endpoint).stage(S)?;
            report(&write_evaluation_tables(&out_dir.unwrap_or(tables), &r).stage(S)?);
        }
        Command::SimulatePolicy {
            model,
            gmodel,
            data,
            out_dir,
            curves_dir,
        } => {
            const S: &str = "simulate-policy";
            let (_, (parts, folds)) = data.load().stage(S)?;
            let m = HazardModel::load(&model).stage(S)?;
            let g = match gmodel {
                Some(p) => CensoringModel::load(&p),
                None => {
                    info!("no --gmodel; refitting the censoring model from the split");
                    weekhaz_core::censoring::fit_censoring(&parts.train, &folds, &cfg.model.fit())
                }
            }
            .stage(S)?;
            let view = pipeline::censoring_view(&g, &parts.test, &cfg).stage(S)?;
            let (baseline, run) = pipeline::simulate(&m, &parts.test, &view.horizons, &cfg).stage(S)?;
            let out = out_dir.unwrap_or(tables);
            let mut files = write_policy_tables(&out, &run, &view.horizons, &view.g_marginal, AnchorVariant::LastObs.name())
                .stage(S)?;
            let curves = curves_dir.unwrap_or_else(|| pipeline::WorkFiles::new(&cfg.paths.out_root).curves);
            files.extend(write_curves_dir(&curves, &parts.test, &baseline, &run, &view.horizons).stage(S)?);
            report(&files);
        }
        Command::Subgroup {
            curves_dir,
            group,
            map,
            replicates,
            seed,
            scenario,
            stratified,
            out_dir,
        } => {
            let sg = &mut cfg.subgroup;
            sg.column = group.unwrap_or(sg.column.clone());
            sg.mapping = map.unwrap_or(sg.mapping.clone());
            sg.scenario = scenario.unwrap_or(sg.scenario.clone());
            sg.bootstrap.replicates = replicates.unwrap_or(sg.bootstrap.replicates);
            sg.bootstrap.seed = seed.unwrap_or(sg.bootstrap.seed);
            sg.bootstrap.stratified |= stratified;
            cfg.validate().stage("config")?;
            let run = pipeline::subgroup(&curves_dir, &cfg).stage("subgroup")?;
            let h = weekhaz_core::curves::read_curves_dir(&curves_dir, &cfg.subgroup.scenario)
                .stage("subgroup")?
                .horizons;
            for r in &run.results {
                println!(
                    "{} T={} dGap={:.8} CI=({:.8}, {:.8}) [{}]",
                    r.horizon, r.week, r.point.delta_gap, r.ci_low, r.ci_high, r.orientation
                );
            }
            let out = out_dir.unwrap_or(tables);
            report(
                &write_subgroup_tables(&out, &cfg.subgroup.scenario, &run, &pipeline::subgroup_note(&h))
                    .stage("subgroup")?,
            );
        }
        Command::RunAll { data_dir } => {
            if let Some(d) = data_dir {
                cfg.paths.data_dir = d;
            }
            let m = pipeline::run_all(&cfg)?;
            println!(
                "{} files; manifest at {}",
                m.files.len(),
                cfg.paths.out_root.join(pipeline::MANIFEST_FILE).display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(2)
        }
    }
}
