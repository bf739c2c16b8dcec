//! Flat TOML run configuration with `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detector::{DetectorConfig, LinearConfig, TreeConfig};
use crate::error::{Error, Result};
use crate::evidence::{EvidenceConfig, DEFAULT_SVD_RANK, EPSILON};
use crate::planner::{DEFAULT_N_WORKFLOWS, DEFAULT_TIMEOUT_SECS};
use crate::search::{DEFAULT_ALPHA, DEFAULT_REFIT_FRACTION};

use super::synthetic::SyntheticSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerBackend {
    Rule,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset directory; a synthetic graph is generated when absent.
    pub dataset: Option<PathBuf>,
    /// File with the free-text task description.
    pub task_text_path: Option<PathBuf>,
    pub task_text: String,

    pub synth_n_nodes: usize,
    pub synth_feature_dim: usize,
    pub synth_anomaly_rate: f64,
    pub synth_n_extra_relations: usize,
    pub synth_homophily: f64,
    pub synth_feature_shift: f64,
    pub synth_rewiring_rate: f64,
    pub synth_avg_degree: f64,
    pub synth_n_communities: usize,

    pub train_ratio: f64,
    /// Share of the non-training labeled nodes assigned to validation.
    pub val_share: f64,
    pub n_workflows: usize,
    pub alpha: f64,
    pub planner: PlannerBackend,
    pub llm_endpoint: String,
    pub llm_model: String,
    pub llm_timeout_secs: u64,
    pub seed: u64,
    /// Worker threads for workflow evaluation; 0 uses every core.
    pub threads: usize,

    pub q_dim: usize,
    pub svd_rank: usize,
    pub cv_folds: usize,
    pub tree_rounds: usize,
    pub tree_max_depth: usize,
    pub tree_learning_rate: f64,
    pub tree_min_samples_leaf: usize,
    pub tree_lambda: f64,
    pub linear_l2: f64,
    pub linear_max_iter: usize,
    pub linear_tolerance: f64,
    pub refit_fraction: f64,
    pub epsilon: f64,

    /// Replace every planned evidence set by the first `k` kinds in priority
    /// order.
    pub fixed_k: Option<usize>,
    pub disable_evidence: bool,
    pub disable_bank: bool,
    pub disable_search: bool,
    pub disable_refit: bool,

    /// Include wall-clock stage timings in the serialized report.
    pub report_timings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SyntheticSpec::default();
        let tree = TreeConfig::default();
        let linear = LinearConfig::default();
        Self {
            dataset: None,
            task_text_path: None,
            task_text: String::new(),
            synth_n_nodes: synth.n_nodes,
            synth_feature_dim: synth.feature_dim,
            synth_anomaly_rate: synth.anomaly_rate,
            synth_n_extra_relations: synth.n_extra_relations,
            synth_homophily: synth.homophily,
            synth_feature_shift: synth.feature_shift,
            synth_rewiring_rate: synth.rewiring_rate,
            synth_avg_degree: synth.avg_degree,
            synth_n_communities: synth.n_communities,
            train_ratio: 0.01,
            val_share: 0.5,
            n_workflows: DEFAULT_N_WORKFLOWS,
            alpha: DEFAULT_ALPHA,
            planner: PlannerBackend::Rule,
            llm_endpoint: "https://api.openai.com/v1/chat/completions".into(),
            llm_model: "gpt-4.1".into(),
            llm_timeout_secs: DEFAULT_TIMEOUT_SECS,
            seed: 0,
            threads: 0,
            q_dim: 8,
            svd_rank: DEFAULT_SVD_RANK,
            cv_folds: 5,
            tree_rounds: tree.rounds,
            tree_max_depth: tree.max_depth,
            tree_learning_rate: tree.learning_rate,
            tree_min_samples_leaf: tree.min_samples_leaf,
            tree_lambda: tree.lambda,
            linear_l2: linear.l2,
            linear_max_iter: linear.max_iter,
            linear_tolerance: linear.tolerance,
            refit_fraction: DEFAULT_REFIT_FRACTION,
            epsilon: EPSILON,
            fixed_k: None,
            disable_evidence: false,
            disable_bank: false,
            disable_search: false,
            disable_refit: false,
            report_timings: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.dataset, &mut cfg.task_text_path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Applies `key=value`. The value is read as a TOML value, falling back
    /// to a bare string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {assignment:?}")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut table = toml::Table::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        if !table.contains_key(key) && !Self::optional_keys().contains(&key) {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        }
        table.insert(key.to_string(), value);
        let updated: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{key}: {e}")))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    fn optional_keys() -> &'static [&'static str] {
        &["dataset", "task_text_path", "fixed_k"]
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return fail(format!("train_ratio must lie in (0, 1), got {}", self.train_ratio));
        }
        if !(0.0..=1.0).contains(&self.val_share) {
            return fail(format!("val_share must lie in [0, 1], got {}", self.val_share));
        }
        if self.n_workflows < 1 {
            return fail("n_workflows must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.refit_fraction) {
            return fail(format!("refit_fraction must lie in [0, 1), got {}", self.refit_fraction));
        }
        if self.q_dim < 1 || self.cv_folds < 2 || self.tree_min_samples_leaf < 1 {
            return fail("q_dim >= 1, cv_folds >= 2 and tree_min_samples_leaf >= 1 required".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.tree_learning_rate > 0.0 && self.tree_lambda >= 0.0 && self.linear_l2 >= 0.0) {
            return fail("tree_learning_rate > 0, tree_lambda >= 0 and linear_l2 >= 0 required".into());
        }
        if self.dataset.is_none() {
            self.synthetic_spec().validate()?;
        }
        Ok(())
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            n_nodes: self.synth_n_nodes,
            feature_dim: self.synth_feature_dim,
            anomaly_rate: self.synth_anomaly_rate,
            n_extra_relations: self.synth_n_extra_relations,
            homophily: self.synth_homophily,
            feature_shift: self.synth_feature_shift,
            rewiring_rate: self.synth_rewiring_rate,
            avg_degree: self.synth_avg_degree,
            n_communities: self.synth_n_communities,
            seed: crate::seed::derive(self.seed, crate::seed::stage::SYNTHETIC),
        }
    }

    pub fn evidence_config(&self) -> EvidenceConfig {
        EvidenceConfig {
            epsilon: self.epsilon,
            svd_rank: self.svd_rank,
        }
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            linear: LinearConfig {
                l2: self.linear_l2,
                max_iter: self.linear_max_iter,
                tolerance: self.linear_tolerance,
            },
            tree: TreeConfig {
                rounds: self.tree_rounds,
                max_depth: self.tree_max_depth,
                learning_rate: self.tree_learning_rate,
                min_samples_leaf: self.tree_min_samples_leaf,
                lambda: self.tree_lambda,
            },
            folds: self.cv_folds,
            q_dim: self.q_dim,
            epsilon: self.epsilon,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.train_ratio, 0.01);
        assert_eq!(c.n_workflows, 20);
        assert_eq!(c.alpha, 0.5);
        assert_eq!(c.planner, PlannerBackend::Rule);
        c.validate().unwrap();
    }

    #[test]
    fn toml_roundtrip_and_comments() {
        let c = RunConfig::from_toml_str("# comment\nseed = 7\nalpha = 0.25 # blend\nplanner = \"llm\"\n")
            .unwrap();
        assert_eq!((c.seed, c.alpha, c.planner), (7, 0.25, PlannerBackend::Llm));
        assert_eq!(RunConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn unknown_and_invalid_keys_rejected() {
        assert!(RunConfig::from_toml_str("sed = 1").is_err());
        assert!(RunConfig::from_toml_str("train_ratio = 1.5").is_err());
        assert!(RunConfig::from_toml_str("n_workflows = 0").is_err());
    }

    #[test]
    fn overrides() {
        let mut c = RunConfig::default();
        c.set("n_workflows=5").unwrap();
        c.set("planner = llm").unwrap();
        c.set("dataset=data/toy").unwrap();
        c.set("fixed_k=2").unwrap();
        assert_eq!(c.n_workflows, 5);
        assert_eq!(c.planner, PlannerBackend::Llm);
        assert_eq!(c.dataset, Some(PathBuf::from("data/toy")));
        assert_eq!(c.fixed_k, Some(2));
        assert!(c.set("alpha=2").is_err());
        assert!(c.set("bogus=1").is_err());
        assert!(c.set("noequals").is_err());
        assert_eq!(c.alpha, 0.5);
    }
}
