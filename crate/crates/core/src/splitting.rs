//! Enrollment-level stratified temporal split and grouped folds.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::csvio::{self, Columns, TableWriter};
use crate::error::{Error, Result};
use crate::ingestion::{Enrollment, EnrollmentKey};
use crate::person_period::PersonPeriodTable;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Partition {
    Train,
    Test,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub key: EnrollmentKey,
    pub partition: Partition,
    pub event: bool,
    pub bucket: usize,
    pub time_for_split: u32,
    pub fold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    /// Sorted by key.
    pub assignments: Vec<SplitAssignment>,
    pub edges: Vec<u32>,
    pub singleton_strata: usize,
}

impl SplitResult {
    pub fn count(&self, p: Partition) -> usize {
        self.assignments.iter().filter(|a| a.partition == p).count()
    }

    pub fn partition_of(&self) -> HashMap<&EnrollmentKey, Partition> {
        self.assignments.iter().map(|a| (&a.key, a.partition)).collect()
    }
}

/// `E = 1 → t_event`, otherwise `t_final`.
pub fn time_for_split(e: &Enrollment) -> u32 {
    if e.event {
        e.t_event.unwrap_or(e.t_final)
    } else {
        e.t_final
    }
}

/// Empirical quantile with linear interpolation between order statistics.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// `q`-quantile bucket edges, rounded down to integers and deduplicated.
pub fn quantile_edges(values: &[u32], q: usize) -> Result<Vec<u32>> {
    if q == 0 {
        return Err(Error::Argument("bucket count q must be ≥ 1".into()));
    }
    if values.is_empty() {
        return Err(Error::EmptyInput("no values to bucket".into()));
    }
    let mut sorted: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut edges: Vec<u32> = (0..=q)
        .map(|i| quantile_sorted(&sorted, i as f64 / q as f64).floor() as u32)
        .collect();
    let before = edges.len();
    edges.dedup();
    if edges.len() < before {
        warn!(
            "collapsed {} duplicate quantile edges; {} effective buckets",
            before - edges.len(),
            edges.len().saturating_sub(1).max(1)
        );
    }
    Ok(edges)
}

/// Right-closed buckets `(e_i, e_{i+1}]`, the first one also closed on the
/// left.
pub fn bucket_of(x: u32, edges: &[u32]) -> usize {
    let n_buckets = edges.len().saturating_sub(1).max(1);
    edges[1..]
        .iter()
        .position(|&hi| x <= hi)
        .unwrap_or(n_buckets - 1)
        .min(n_buckets - 1)
}

/// Number of test enrollments drawn from a stratum of size `n`.
pub fn stratum_test_count(n: usize, test_size: f64) -> usize {
    if n < 2 {
        return 0;
    }
    let raw = (test_size * n as f64).round_ties_even() as usize;
    raw.clamp(1, n - 1)
}

pub fn stratified_split(
    enrollments: &[Enrollment],
    q: usize,
    test_size: f64,
    seed: u64,
) -> Result<SplitResult> {
    if !(test_size > 0.0 && test_size < 1.0) {
        return Err(Error::Argument(format!("test_size must be in (0, 1), got {test_size}")));
    }
    let mut sorted: Vec<&Enrollment> = enrollments.iter().collect();
    sorted.sort_by(|a, b| a.key.cmp(&b.key));
    let times: Vec<u32> = sorted.iter().map(|e| time_for_split(e)).collect();
    let edges = quantile_edges(&times, q)?;

    let mut strata: BTreeMap<(bool, usize), Vec<usize>> = BTreeMap::new();
    for (i, e) in sorted.iter().enumerate() {
        strata
            .entry((e.event, bucket_of(times[i], &edges)))
            .or_default()
            .push(i);
    }

    let mut rng = stream_rng(seed, Stream::Split);
    let mut test = vec![false; sorted.len()];
    let mut singleton_strata = 0;
    for ((event, bucket), members) in &strata {
        if members.len() == 1 {
            singleton_strata += 1;
            info!("singleton stratum (event={event}, bucket={bucket}) assigned to train");
            continue;
        }
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for &i in shuffled.iter().take(stratum_test_count(members.len(), test_size)) {
            test[i] = true;
        }
    }

    let assignments = sorted
        .iter()
        .enumerate()
        .map(|(i, e)| SplitAssignment {
            key: e.key.clone(),
            partition: if test[i] { Partition::Test } else { Partition::Train },
            event: e.event,
            bucket: bucket_of(times[i], &edges),
            time_for_split: times[i],
            fold: None,
        })
        .collect();
    Ok(SplitResult {
        assignments,
        edges,
        singleton_strata,
    })
}

/// Leave-one-run-out: every enrollment of `(module, presentation)` goes to
/// test, everything else to train.
pub fn holdout_run_split(enrollments: &[Enrollment], module: &str, presentation: &str) -> Result<SplitResult> {
    let mut sorted: Vec<&Enrollment> = enrollments.iter().collect();
    sorted.sort_by(|a, b| a.key.cmp(&b.key));
    let assignments: Vec<SplitAssignment> = sorted
        .iter()
        .map(|e| SplitAssignment {
            key: e.key.clone(),
            partition: if e.key.code_module == module && e.key.code_presentation == presentation {
                Partition::Test
            } else {
                Partition::Train
            },
            event: e.event,
            bucket: 0,
            time_for_split: time_for_split(e),
            fold: None,
        })
        .collect();
    let n_test = assignments.iter().filter(|a| a.partition == Partition::Test).count();
    if n_test == 0 {
        return Err(Error::Argument(format!("run {module},{presentation} has no enrollments")));
    }
    if n_test == assignments.len() {
        return Err(Error::Argument(format!("run {module},{presentation} is the whole cohort")));
    }
    Ok(SplitResult {
        assignments,
        edges: Vec::new(),
        singleton_strata: 0,
    })
}

/// Fold label per key (aligned with `keys`): keys are shuffled with the
/// seeded fold stream and dealt round-robin into `k` folds.
pub fn grouped_kfold(keys: &[EnrollmentKey], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Argument(format!("k must be ≥ 2, got {k}")));
    }
    if k > keys.len() {
        return Err(Error::Argument(format!("k={k} exceeds {} enrollments", keys.len())));
    }
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut rng = stream_rng(seed, Stream::Folds);
    order.shuffle(&mut rng);
    let mut folds = vec![0; keys.len()];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k;
    }
    Ok(folds)
}

/// Fills `fold` for every train assignment.
pub fn assign_folds(split: &mut SplitResult, k: usize, seed: u64) -> Result<()> {
    let train: Vec<usize> = split
        .assignments
        .iter()
        .enumerate()
        .filter(|(_, a)| a.partition == Partition::Train)
        .map(|(i, _)| i)
        .collect();
    let keys: Vec<EnrollmentKey> = train.iter().map(|&i| split.assignments[i].key.clone()).collect();
    let folds = grouped_kfold(&keys, k, seed)?;
    for (&i, f) in train.iter().zip(folds) {
        split.assignments[i].fold = Some(f);
    }
    Ok(())
}

/// Train and test tables plus the fold of each train enrollment (aligned
/// with `train.enrollments`).
pub struct PartitionedTables {
    pub train: PersonPeriodTable,
    pub test: PersonPeriodTable,
    pub train_folds: Vec<Option<usize>>,
}

pub fn partition_table(table: &PersonPeriodTable, split: &SplitResult) -> Result<PartitionedTables> {
    let by_key: HashMap<&EnrollmentKey, &SplitAssignment> =
        split.assignments.iter().map(|a| (&a.key, a)).collect();
    for e in &table.enrollments {
        if !by_key.contains_key(&e.key) {
            return Err(Error::Contract(format!("enrollment {} has no split assignment", e.key)));
        }
    }
    let train = table.select(|e| by_key[&e.key].partition == Partition::Train);
    let test = table.select(|e| by_key[&e.key].partition == Partition::Test);
    let train_folds = train.enrollments.iter().map(|e| by_key[&e.key].fold).collect();
    Ok(PartitionedTables {
        train,
        test,
        train_folds,
    })
}

/// Keys present in both partitions; must be empty.
pub fn leaked_keys(split: &SplitResult) -> Vec<EnrollmentKey> {
    let mut seen: HashMap<&EnrollmentKey, Partition> = HashMap::new();
    let mut leaked = HashSet::new();
    for a in &split.assignments {
        if let Some(p) = seen.insert(&a.key, a.partition) {
            if p != a.partition {
                leaked.insert(a.key.clone());
            }
        }
    }
    let mut out: Vec<_> = leaked.into_iter().collect();
    out.sort();
    out
}

const SPLIT_HEADER: [&str; 8] = [
    "id_student",
    "code_module",
    "code_presentation",
    "partition",
    "event",
    "bucket",
    "time_for_split",
    "fold",
];

pub fn write_split(path: &Path, split: &SplitResult) -> Result<()> {
    let mut w = TableWriter::create(path, &SPLIT_HEADER)?;
    for a in &split.assignments {
        w.row([
            a.key.id_student.to_string(),
            a.key.code_module.clone(),
            a.key.code_presentation.clone(),
            a.partition.as_str().to_string(),
            u8::from(a.event).to_string(),
            a.bucket.to_string(),
            a.time_for_split.to_string(),
            a.fold.map(|f| f.to_string()).unwrap_or_default(),
        ])?;
    }
    w.finish()
}

pub fn read_split(path: &Path) -> Result<SplitResult> {
    const T: &str = "split";
    let mut rdr = csvio::open_reader(path)?;
    let cols = Columns::from_headers(T, rdr.headers()?);
    let idx: Vec<usize> = SPLIT_HEADER.iter().map(|c| cols.require(c)).collect::<Result<_>>()?;
    let mut assignments = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| rec[idx[i]].trim();
        let partition = match get(3) {
            "train" => Partition::Train,
            "test" => Partition::Test,
            other => return Err(Error::schema(T, format!("line {line}: unknown partition `{other}`"))),
        };
        assignments.push(SplitAssignment {
            key: EnrollmentKey {
                id_student: csvio::parse_i64(T, "id_student", line, get(0))?,
                code_module: get(1).to_string(),
                code_presentation: get(2).to_string(),
            },
            partition,
            event: get(4) == "1",
            bucket: csvio::parse_i64(T, "bucket", line, get(5))? as usize,
            time_for_split: csvio::parse_i64(T, "time_for_split", line, get(6))? as u32,
            fold: csvio::parse_opt_i64(get(7)).map(|f| f as usize),
        });
    }
    Ok(SplitResult {
        assignments,
        edges: Vec::new(),
        singleton_strata: 0,
    })
}
