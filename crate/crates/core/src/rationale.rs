//! Select-then-predict model: a linear token scorer picks a fixed fraction of
//! positions, and a linear classifier sees only those positions (all others
//! are replaced by [`PAD`]).
//!
//! Training is joint. The forward pass uses the hard top-k mask; the backward
//! pass treats the mask as the identity on the k selected scores, so each
//! selected token's score moves by the loss gradient of its gate. The
//! selection ratio is annealed from 1 down to the target over the first
//! epochs so every token gets classifier weight before it can be dropped.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::{
    class_count_of, empty_model, epoch_rate, validate_labels, LinearClassifier, LinearConfig,
    TrainReport,
};
use crate::model::{accuracy, Classifier, LogitGradients, ProbVector};
use crate::perturb::budget;
use crate::text::{Instance, PAD};
use crate::util::StableHasher;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RationaleConfig {
    pub ratio: f64,
    pub linear: LinearConfig,
    pub extractor_learning_rate: f64,
    pub extractor_l2: f64,
    /// Epochs over which the ratio decays linearly from 1 to `ratio`.
    pub anneal_epochs: usize,
}

impl Default for RationaleConfig {
    fn default() -> Self {
        Self {
            ratio: 0.2,
            linear: LinearConfig::default(),
            extractor_learning_rate: 0.1,
            extractor_l2: 1e-3,
            anneal_epochs: 4,
        }
    }
}

/// Positions chosen by the extractor for one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSelection {
    pub id: String,
    /// Strictly increasing flattened positions.
    pub positions: Vec<usize>,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RationaleModel {
    ratio: f64,
    extractor: BTreeMap<String, f64>,
    classifier: LinearClassifier,
    fingerprint: String,
}

fn check_ratio(ratio: f64) -> Result<()> {
    if ratio > 0.0 && ratio <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("selection ratio must lie in (0, 1], got {ratio}")))
    }
}

/// Top-`k` positions by score, ties to the earlier position, returned sorted.
fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

impl RationaleModel {
    pub fn from_parts(
        ratio: f64,
        extractor: BTreeMap<String, f64>,
        classifier: LinearClassifier,
    ) -> Result<Self> {
        check_ratio(ratio)?;
        let mut h = StableHasher::new();
        h.str("rationale").f64(ratio).str(&classifier.fingerprint());
        for (t, s) in &extractor {
            h.str(t).f64(*s);
        }
        let fingerprint = format!("rationale-{}", &h.finish_hex()[..16]);
        Ok(Self { ratio, extractor, classifier, fingerprint })
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn extractor(&self) -> &BTreeMap<String, f64> {
        &self.extractor
    }

    pub fn classifier(&self) -> &LinearClassifier {
        &self.classifier
    }

    pub fn token_score(&self, token: &str) -> f64 {
        if token == PAD {
            return f64::NEG_INFINITY;
        }
        self.extractor.get(token).copied().unwrap_or(0.0)
    }

    /// Number of positions selected for a sequence of `len` tokens.
    pub fn subset_size(&self, len: usize) -> usize {
        if len == 0 {
            0
        } else {
            budget(len, self.ratio)
        }
    }

    fn positions_at(&self, x: &Instance, ratio: f64) -> Vec<usize> {
        let scores: Vec<f64> = x.tokens().map(|t| self.token_score(t)).collect();
        let k = if scores.is_empty() { 0 } else { budget(scores.len(), ratio) };
        top_k(&scores, k)
    }

    pub fn select(&self, x: &Instance) -> SubsetSelection {
        let positions = self.positions_at(x, self.ratio);
        let tokens = positions
            .iter()
            .map(|&p| String::from(x.token(p).unwrap()))
            .collect();
        SubsetSelection { id: x.id.clone(), positions, tokens }
    }

    /// The classifier's view of `x`: unselected positions hold [`PAD`].
    pub fn masked_view(&self, x: &Instance) -> Instance {
        x.pad_except(&self.select(x).positions)
    }
}

impl Classifier for RationaleModel {
    fn predict(&self, x: &Instance) -> ProbVector {
        self.classifier.predict(&self.masked_view(x))
    }

    fn class_count(&self) -> usize {
        self.classifier.class_count()
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }

    fn vocabulary(&self) -> Option<&[String]> {
        self.classifier.vocabulary()
    }

    /// Gradients of the classifier on the masked view. The selection is
    /// piecewise constant, so unselected positions get zero.
    fn logit_gradients(&self, x: &Instance) -> Option<LogitGradients> {
        self.classifier.logit_gradients(&self.masked_view(x))
    }
}

/// Jointly trains extractor and classifier. With `ratio = 1` the classifier
/// receives exactly the updates of [`crate::linear::train_linear_classifier`]
/// under the same linear config.
pub fn train_rationale_model(
    train: &[Instance],
    heldout: &[Instance],
    config: &RationaleConfig,
) -> Result<(RationaleModel, TrainReport)> {
    check_ratio(config.ratio)?;
    config.linear.validate()?;
    let classes = class_count_of(train)?;
    validate_labels(train, classes)?;
    validate_labels(heldout, classes)?;
    let mut classifier = empty_model(train, classes, &config.linear)?;
    let mut model = RationaleModel {
        ratio: config.ratio,
        extractor: classifier
            .params()
            .tokens
            .iter()
            .map(|t| (t.clone(), 0.0))
            .collect(),
        classifier: classifier.clone(),
        fingerprint: String::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.linear.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.linear.epochs {
        order.shuffle(&mut rng);
        let lr = epoch_rate(&config.linear, epoch);
        let ratio = if epoch < config.anneal_epochs {
            1.0 - (1.0 - config.ratio) * epoch as f64 / config.anneal_epochs as f64
        } else {
            config.ratio
        };
        for &i in &order {
            let x = &train[i];
            let selected = model.positions_at(x, ratio);
            let view = x.pad_except(&selected);
            let occ = classifier.occurrences(&view);
            let gate_grad = classifier.sgd_step(&occ, x.label, lr);
            let mut token_grad = vec![0.0; x.len()];
            for (o, g) in occ.iter().zip(&gate_grad) {
                for &p in &o.positions[..o.span] {
                    token_grad[p] += g;
                }
            }
            for &p in &selected {
                let tok = x.token(p).unwrap();
                if let Some(s) = model.extractor.get_mut(tok) {
                    *s -= config.extractor_learning_rate * (token_grad[p] + config.extractor_l2 * *s);
                }
            }
        }
    }
    classifier.refresh_fingerprint();
    let model = RationaleModel::from_parts(config.ratio, model.extractor, classifier)?;
    let report = TrainReport {
        train_accuracy: accuracy(&model, train),
        heldout_accuracy: accuracy(&model, heldout),
        train_size: train.len(),
        heldout_size: heldout.len(),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::LinearBuilder;

    fn fixed(ratio: f64, scores: &[(&str, f64)]) -> RationaleModel {
        let clf = LinearBuilder::new(2).unigram(0, "key", &[0.0, 3.0]).build().unwrap();
        let ext = scores.iter().map(|(t, s)| (String::from(*t), *s)).collect();
        RationaleModel::from_parts(ratio, ext, clf).unwrap()
    }

    #[test]
    fn selection_size_and_ties() {
        let m = fixed(0.2, &[("key", 1.0)]);
        let x = Instance::from_text("a", "p q r key s t u v w z", 1);
        let sel = m.select(&x);
        assert_eq!(sel.positions, vec![0, 3]);
        assert_eq!(sel.tokens, vec!["p", "key"]);
        let short = Instance::from_text("b", "p q", 1);
        assert_eq!(m.select(&short).positions, vec![0]);
    }

    #[test]
    fn prediction_sees_only_selected_tokens() {
        let m = fixed(0.1, &[("key", -1.0)]);
        let x = Instance::from_text("a", "key q", 1);
        assert_eq!(m.select(&x).positions, vec![1]);
        assert_eq!(m.predict(&x), ProbVector::uniform(2));
    }

    #[test]
    fn rejects_bad_ratio() {
        let clf = LinearBuilder::new(2).build().unwrap();
        assert!(RationaleModel::from_parts(0.0, BTreeMap::new(), clf.clone()).is_err());
        assert!(RationaleModel::from_parts(1.5, BTreeMap::new(), clf).is_err());
    }
}
