//! Run configuration (TOML). Every run record embeds the resolved config.

use std::fs;
use std::path::{Path, PathBuf};

use attraudit_core::attack::DEFAULT_SIMILARITY_THRESHOLD;
use attraudit_core::attribution::Method;
use attraudit_core::linear::LinearConfig;
use attraudit_core::perturb::{AopcMode, StrategyKind};
use serde::{Deserialize, Serialize};

use crate::report::TableFormat;

/// Raised for invalid configuration; names the offending key.
#[derive(Debug, thiserror::Error)]
#[error("config: {key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self { key: key.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Linear,
    Rationale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepChoice {
    #[default]
    Argmax,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Load this model file instead of training.
    pub path: Option<PathBuf>,
    pub ngram_order: usize,
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Selection ratio of the rationale model.
    pub rationale_ratio: f64,
    pub extractor_learning_rate: f64,
    pub extractor_l2: f64,
    pub anneal_epochs: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        let l = LinearConfig::default();
        let r = attraudit_core::rationale::RationaleConfig::default();
        Self {
            kind: ModelKind::Linear,
            path: None,
            ngram_order: l.ngram_order,
            l2: l.l2,
            epochs: l.epochs,
            learning_rate: l.learning_rate,
            rationale_ratio: r.ratio,
            extractor_learning_rate: r.extractor_learning_rate,
            extractor_l2: r.extractor_l2,
            anneal_epochs: r.anneal_epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Training data (file path or `bundled:<corpus>/<split>`).
    pub train: String,
    /// Data to attribute, evaluate, attack or audit.
    pub eval: String,
    pub lexicon: String,
    /// Word-tag file for the descriptive agreement statistic of `audit`.
    pub tags: Option<PathBuf>,
    /// Use only the first `limit` eval instances.
    pub limit: Option<usize>,
    /// Expected number of classes; labels are range-checked when set.
    pub classes: Option<usize>,
    pub model: ModelSpec,
    pub methods: Vec<Method>,
    pub strategies: Vec<StrategyKind>,
    /// Perturbation ratios: evaluation budget and attack budget.
    pub ratios: Vec<f64>,
    pub beam_capacity: usize,
    pub marg_cap: usize,
    pub infill_order: usize,
    pub aopc_mode: AopcMode,
    pub rep_mode: RepChoice,
    /// Attribution method attacked by `attack` on a linear model.
    pub attack_method: Method,
    pub similarity_threshold: f64,
    pub symmetric_lexicon: bool,
    /// Field blanked by `audit`.
    pub audit_field: String,
    /// Heat maps written by `attribute` (first N instances).
    pub heatmaps: usize,
    pub format: TableFormat,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train: "bundled:mini-sentiment/train".into(),
            eval: "bundled:mini-sentiment/dev".into(),
            lexicon: "bundled:lexicon".into(),
            tags: None,
            limit: None,
            classes: None,
            model: ModelSpec::default(),
            methods: Method::ALL.to_vec(),
            strategies: StrategyKind::ALL.to_vec(),
            ratios: vec![0.2],
            beam_capacity: 100,
            marg_cap: 20,
            infill_order: 2,
            aopc_mode: AopcMode::SingleStep,
            rep_mode: RepChoice::Argmax,
            attack_method: Method::Loo,
            similarity_threshold: DEFAULT_SIMILARITY_THRESHOLD,
            symmetric_lexicon: true,
            audit_field: "question".into(),
            heatmaps: 0,
            format: TableFormat::Csv,
            output_dir: PathBuf::from("runs"),
        }
    }
}

fn ratio_ok(r: f64) -> bool {
    r > 0.0 && r <= 1.0
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = msg
                .split('`')
                .nth(1)
                .map(String::from)
                .unwrap_or_else(|| "<file>".into());
            ConfigError::new(key, msg)
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::new("--config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.methods.is_empty() {
            return Err(ConfigError::new("methods", "at least one method is required"));
        }
        if self.strategies.is_empty() {
            return Err(ConfigError::new("strategies", "at least one strategy is required"));
        }
        if self.ratios.is_empty() {
            return Err(ConfigError::new("ratios", "at least one ratio is required"));
        }
        if let Some(r) = self.ratios.iter().find(|r| !ratio_ok(**r)) {
            return Err(ConfigError::new("ratios", format!("{r} is outside (0, 1]")));
        }
        if self.beam_capacity == 0 {
            return Err(ConfigError::new("beam_capacity", "must be at least 1"));
        }
        if self.marg_cap == 0 {
            return Err(ConfigError::new("marg_cap", "must be at least 1"));
        }
        if !(1..=2).contains(&self.infill_order) {
            return Err(ConfigError::new("infill_order", "must be 1 or 2"));
        }
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold <= 1.0) {
            return Err(ConfigError::new("similarity_threshold", "must lie in (0, 1]"));
        }
        if self.classes.is_some_and(|c| c < 2) {
            return Err(ConfigError::new("classes", "must be at least 2"));
        }
        if self.limit == Some(0) {
            return Err(ConfigError::new("limit", "must be at least 1"));
        }
        if !ratio_ok(self.model.rationale_ratio) {
            return Err(ConfigError::new("model.rationale_ratio", "must lie in (0, 1]"));
        }
        self.linear_config()
            .validate()
            .map_err(|e| ConfigError::new("model", e.to_string()))?;
        Ok(())
    }

    pub fn linear_config(&self) -> LinearConfig {
        LinearConfig {
            ngram_order: self.model.ngram_order,
            l2: self.model.l2,
            epochs: self.model.epochs,
            learning_rate: self.model.learning_rate,
            seed: self.seed,
        }
    }

    pub fn rationale_config(&self) -> attraudit_core::rationale::RationaleConfig {
        attraudit_core::rationale::RationaleConfig {
            ratio: self.model.rationale_ratio,
            linear: self.linear_config(),
            extractor_learning_rate: self.model.extractor_learning_rate,
            extractor_l2: self.model.extractor_l2,
            anneal_epochs: self.model.anneal_epochs,
        }
    }
}

/// Command-line values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub ratios: Option<Vec<f64>>,
    pub methods: Option<Vec<Method>>,
    pub strategies: Option<Vec<StrategyKind>>,
    pub beam_capacity: Option<usize>,
    pub format: Option<TableFormat>,
    pub output_dir: Option<PathBuf>,
    pub train: Option<String>,
    pub eval: Option<String>,
    pub model_path: Option<PathBuf>,
    pub model_kind: Option<ModelKind>,
    pub limit: Option<usize>,
}

impl Overrides {
    pub fn apply(self, c: &mut RunConfig) {
        macro_rules! set {
            ($src:expr => $dst:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(self.seed => c.seed);
        set!(self.ratios => c.ratios);
        set!(self.methods => c.methods);
        set!(self.strategies => c.strategies);
        set!(self.beam_capacity => c.beam_capacity);
        set!(self.format => c.format);
        set!(self.output_dir => c.output_dir);
        set!(self.train => c.train);
        set!(self.eval => c.eval);
        set!(self.model_kind => c.model.kind);
        if self.model_path.is_some() {
            c.model.path = self.model_path;
        }
        if self.limit.is_some() {
            c.limit = self.limit;
        }
    }
}
