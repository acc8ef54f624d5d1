//! Run configuration (TOML). Every field has a default; unknown keys are
//! rejected at load time.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::censoring::AnchorVariant;
use crate::error::{Error, Result};
use crate::hazard::FitConfig;
use crate::policy::{default_catalog, GridSpec, PolicyScenario};
use crate::subgroup::{BootstrapConfig, GroupMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed for the split, folds and synthetic data.
    pub seed: u64,
    pub paths: PathsConfig,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub calibration: CalibrationConfig,
    pub horizons: HorizonsConfig,
    pub policy: PolicyConfig,
    pub subgroup: SubgroupConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            paths: PathsConfig::default(),
            split: SplitConfig::default(),
            model: ModelConfig::default(),
            calibration: CalibrationConfig::default(),
            horizons: HorizonsConfig::default(),
            policy: PolicyConfig::default(),
            subgroup: SubgroupConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub data_dir: PathBuf,
    /// Raw file extension, without the dot.
    pub data_extension: String,
    /// Artifact root; tables land in `<out_root>/tables`.
    pub out_root: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            data_dir: PathBuf::from("data"),
            data_extension: "csv".into(),
            out_root: PathBuf::from("outputs_v2"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub q: usize,
    pub test_size: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { q: 4, test_size: 0.30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub lambda: f64,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let f = FitConfig::default();
        ModelConfig {
            lambda: f.lambda,
            max_iter: f.max_iter,
            tolerance: f.tol,
        }
    }
}

impl ModelConfig {
    pub fn fit(&self) -> FitConfig {
        FitConfig {
            lambda: self.lambda,
            max_iter: self.max_iter,
            tol: self.tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub k: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig { k: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HorizonsConfig {
    pub t_policy: u32,
    pub t_eval_policy: u32,
    pub g_min: f64,
    pub weight_cap: f64,
}

impl Default for HorizonsConfig {
    fn default() -> Self {
        HorizonsConfig {
            t_policy: 18,
            t_eval_policy: 38,
            g_min: 0.05,
            weight_cap: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub scenarios: Vec<PolicyScenario>,
    pub grid: GridSpec,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            scenarios: default_catalog(),
            grid: GridSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubgroupConfig {
    pub column: String,
    /// `level=indicator` pairs, e.g. `F=1,M=0`.
    pub mapping: String,
    pub scenario: String,
    pub bootstrap: BootstrapConfig,
}

impl Default for SubgroupConfig {
    fn default() -> Self {
        SubgroupConfig {
            column: "gender".into(),
            mapping: "F=1,M=0".into(),
            scenario: "shock_hyp_a".into(),
            bootstrap: BootstrapConfig::default(),
        }
    }
}

impl SubgroupConfig {
    pub fn group_map(&self) -> Result<GroupMap> {
        GroupMap::parse(&self.column, &self.mapping)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub group_column: String,
    /// Largest runs evaluated leave-one-run-out; 0 disables the battery.
    pub holdout_runs: usize,
    pub ablation: bool,
    pub anchor_variants: Vec<AnchorVariant>,
    /// Optional CSV of externally produced risk scores.
    pub external_scores: Option<PathBuf>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            group_column: "gender".into(),
            holdout_runs: 5,
            ablation: true,
            anchor_variants: AnchorVariant::ALL.to_vec(),
            external_scores: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path`, or the defaults when `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                RunConfig::from_toml(&text).map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn tables_dir(&self) -> PathBuf {
        self.paths.out_root.join("tables")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.split.q < 1 {
            return bad("split.q must be ≥ 1".into());
        }
        if !(self.split.test_size > 0.0 && self.split.test_size < 1.0) {
            return bad(format!("split.test_size {} outside (0, 1)", self.split.test_size));
        }
        if self.calibration.k < 2 {
            return bad("calibration.k must be ≥ 2".into());
        }
        if !(self.model.lambda >= 0.0 && self.model.tolerance > 0.0 && self.model.max_iter > 0) {
            return bad("model.lambda ≥ 0, model.tolerance > 0 and model.max_iter > 0 are required".into());
        }
        let h = &self.horizons;
        if !(h.g_min > 0.0 && h.g_min < 1.0) {
            return bad(format!("horizons.g_min {} outside (0, 1)", h.g_min));
        }
        if h.weight_cap < 1.0 {
            return bad(format!("horizons.weight_cap {} below 1", h.weight_cap));
        }
        if h.t_policy > h.t_eval_policy {
            return bad("horizons.t_policy exceeds horizons.t_eval_policy".into());
        }
        if self.policy.scenarios.is_empty() {
            return bad("policy.scenarios is empty".into());
        }
        for s in &self.policy.scenarios {
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if !self.policy.scenarios.iter().any(|s| s.scenario_id == self.subgroup.scenario) {
            return bad(format!("subgroup.scenario `{}` is not in the catalog", self.subgroup.scenario));
        }
        self.subgroup.group_map().map_err(|e| Error::Config(e.to_string()))?;
        let b = &self.subgroup.bootstrap;
        if b.replicates == 0 || !(b.level > 0.0 && b.level < 1.0) {
            return bad("subgroup.bootstrap needs replicates ≥ 1 and level in (0, 1)".into());
        }
        Ok(())
    }
}
