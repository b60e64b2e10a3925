//! Model persistence: one JSON document `{kind, fingerprint, vocab, weights, config}`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use attraudit_core::linear::{FeatureKey, LinearClassifier, LinearConfig, LinearParams};
use attraudit_core::model::LogitGradients;
use attraudit_core::rationale::RationaleModel;
use attraudit_core::{Classifier, Instance, ProbVector};
use serde::{Deserialize, Serialize};

/// Either built-in model.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Linear(LinearClassifier),
    Rationale(RationaleModel),
}

impl AnyModel {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyModel::Linear(_) => "linear",
            AnyModel::Rationale(_) => "rationale",
        }
    }
}

impl Classifier for AnyModel {
    fn predict(&self, x: &Instance) -> ProbVector {
        match self {
            AnyModel::Linear(m) => m.predict(x),
            AnyModel::Rationale(m) => m.predict(x),
        }
    }

    fn class_count(&self) -> usize {
        match self {
            AnyModel::Linear(m) => m.class_count(),
            AnyModel::Rationale(m) => m.class_count(),
        }
    }

    fn fingerprint(&self) -> String {
        match self {
            AnyModel::Linear(m) => m.fingerprint(),
            AnyModel::Rationale(m) => m.fingerprint(),
        }
    }

    fn vocabulary(&self) -> Option<&[String]> {
        match self {
            AnyModel::Linear(m) => m.vocabulary(),
            AnyModel::Rationale(m) => m.vocabulary(),
        }
    }

    fn logit_gradients(&self, x: &Instance) -> Option<LogitGradients> {
        match self {
            AnyModel::Linear(m) => m.logit_gradients(x),
            AnyModel::Rationale(m) => m.logit_gradients(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub classes: usize,
    pub features: Vec<FeatureKey>,
    pub bias: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extractor: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub linear: LinearConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub kind: String,
    pub fingerprint: String,
    pub vocab: Vec<String>,
    pub weights: Weights,
    pub config: ModelConfig,
}

fn linear_parts(m: &LinearClassifier) -> (Vec<String>, Weights, LinearConfig) {
    let p = m.params();
    (
        p.tokens.clone(),
        Weights {
            classes: p.classes,
            features: p.features.clone(),
            bias: p.bias.clone(),
            weights: p.weights.clone(),
            extractor: None,
        },
        m.config().clone(),
    )
}

impl ModelFile {
    pub fn from_model(model: &AnyModel) -> Self {
        match model {
            AnyModel::Linear(m) => {
                let (vocab, weights, linear) = linear_parts(m);
                ModelFile {
                    kind: "linear".into(),
                    fingerprint: m.fingerprint(),
                    vocab,
                    weights,
                    config: ModelConfig { linear, ratio: None },
                }
            }
            AnyModel::Rationale(m) => {
                let (vocab, mut weights, linear) = linear_parts(m.classifier());
                weights.extractor = Some(m.extractor().clone());
                ModelFile {
                    kind: "rationale".into(),
                    fingerprint: m.fingerprint(),
                    vocab,
                    weights,
                    config: ModelConfig { linear, ratio: Some(m.ratio()) },
                }
            }
        }
    }

    /// Rebuilds the model and checks that its fingerprint matches the file.
    pub fn into_model(self) -> anyhow::Result<AnyModel> {
        let params = LinearParams {
            classes: self.weights.classes,
            tokens: self.vocab,
            features: self.weights.features,
            bias: self.weights.bias,
            weights: self.weights.weights,
        };
        let classifier = LinearClassifier::from_params(self.config.linear, params)?;
        let model = match self.kind.as_str() {
            "linear" => AnyModel::Linear(classifier),
            "rationale" => {
                let ratio = self.config.ratio.context("rationale model file lacks config.ratio")?;
                let extractor =
                    self.weights.extractor.context("rationale model file lacks weights.extractor")?;
                AnyModel::Rationale(RationaleModel::from_parts(ratio, extractor, classifier)?)
            }
            other => bail!("unknown model kind `{other}`"),
        };
        if model.fingerprint() != self.fingerprint {
            bail!(
                "model fingerprint mismatch: file says {}, weights give {}",
                self.fingerprint,
                model.fingerprint()
            );
        }
        Ok(model)
    }
}

pub fn save_model(path: &Path, model: &AnyModel) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(&ModelFile::from_model(model))?;
    fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn load_model(path: &Path) -> anyhow::Result<AnyModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: ModelFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    file.into_model()
}
