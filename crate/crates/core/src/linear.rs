//! Multinomial logistic regression over field-tagged bags of n-grams.
//!
//! Features are `(field index, token)` unigrams and, for order 2, adjacent
//! `(field index, token, token)` bigrams inside one field. Any n-gram that
//! touches [`PAD`](crate::text::PAD) or an unknown token contributes nothing,
//! so padding a position removes exactly the n-grams that contain it.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Classifier, LogitGradients, ProbVector};
use crate::text::{Instance, PAD};
use crate::util::StableHasher;

const NO_TOKEN: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearConfig {
    /// 1 = unigrams, 2 = unigrams + bigrams.
    pub ngram_order: usize,
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            ngram_order: 2,
            l2: 1e-4,
            epochs: 12,
            learning_rate: 0.3,
            seed: 0,
        }
    }
}

impl LinearConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.ngram_order) {
            return Err(Error::Config(format!(
                "ngram_order must be 1 or 2, got {}",
                self.ngram_order
            )));
        }
        if !(self.l2 >= 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::Config("l2 must be >= 0 and learning_rate > 0".into()));
        }
        Ok(())
    }
}

/// `(field, first token id, second token id or NO_TOKEN)`.
pub type FeatureKey = (u16, u32, u32);

/// One n-gram occurrence in an instance: feature index and the flattened
/// positions it spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Occurrence {
    pub feature: usize,
    pub positions: [usize; 2],
    pub span: usize,
}

/// Serializable parameter block of a linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearParams {
    pub classes: usize,
    pub tokens: Vec<String>,
    pub features: Vec<FeatureKey>,
    pub bias: Vec<f64>,
    /// `weights[class][feature]`.
    pub weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct LinearClassifier {
    config: LinearConfig,
    params: LinearParams,
    token_index: BTreeMap<String, u32>,
    feature_index: BTreeMap<FeatureKey, usize>,
    fingerprint: String,
}

impl PartialEq for LinearClassifier {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

impl LinearClassifier {
    pub fn from_params(config: LinearConfig, params: LinearParams) -> Result<Self> {
        config.validate()?;
        if params.classes < 2 {
            return Err(Error::Config("a classifier needs at least 2 classes".into()));
        }
        if params.bias.len() != params.classes
            || params.weights.len() != params.classes
            || params.weights.iter().any(|w| w.len() != params.features.len())
        {
            return Err(Error::Config("weight shapes do not match class/feature counts".into()));
        }
        let token_index = params
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let feature_index = params
            .features
            .iter()
            .enumerate()
            .map(|(i, k)| (*k, i))
            .collect();
        let mut model = Self {
            config,
            params,
            token_index,
            feature_index,
            fingerprint: String::new(),
        };
        model.fingerprint = model.compute_fingerprint();
        Ok(model)
    }

    pub fn config(&self) -> &LinearConfig {
        &self.config
    }

    pub fn params(&self) -> &LinearParams {
        &self.params
    }

    pub fn into_parts(self) -> (LinearConfig, LinearParams) {
        (self.config, self.params)
    }

    fn compute_fingerprint(&self) -> String {
        let mut h = StableHasher::new();
        h.str("linear")
            .u64(self.config.ngram_order as u64)
            .f64(self.config.l2)
            .u64(self.config.epochs as u64)
            .f64(self.config.learning_rate)
            .u64(self.config.seed)
            .u64(self.params.classes as u64);
        for t in &self.params.tokens {
            h.str(t);
        }
        for &(f, a, b) in &self.params.features {
            h.u64(f as u64).u64(a as u64).u64(b as u64);
        }
        for v in self.params.bias.iter().chain(self.params.weights.iter().flatten()) {
            h.f64(*v);
        }
        let hex = h.finish_hex();
        format!("linear-{}", &hex[..16])
    }

    fn token_id(&self, token: &str) -> Option<u32> {
        if token == PAD {
            return None;
        }
        self.token_index.get(token).copied()
    }

    /// All known n-gram occurrences in `x`.
    pub(crate) fn occurrences(&self, x: &Instance) -> Vec<Occurrence> {
        let mut out = Vec::new();
        let mut flat = 0;
        for (fi, field) in x.fields.iter().enumerate() {
            let ids: Vec<Option<u32>> = field.tokens.iter().map(|t| self.token_id(t)).collect();
            for (i, id) in ids.iter().enumerate() {
                let Some(a) = *id else { continue };
                if let Some(&feature) = self.feature_index.get(&(fi as u16, a, NO_TOKEN)) {
                    out.push(Occurrence { feature, positions: [flat + i, 0], span: 1 });
                }
                if self.config.ngram_order >= 2 {
                    if let Some(Some(b)) = ids.get(i + 1) {
                        if let Some(&feature) = self.feature_index.get(&(fi as u16, a, *b)) {
                            out.push(Occurrence {
                                feature,
                                positions: [flat + i, flat + i + 1],
                                span: 2,
                            });
                        }
                    }
                }
            }
            flat += field.tokens.len();
        }
        out
    }

    fn logits_from(&self, occ: &[Occurrence], gate: impl Fn(&Occurrence) -> f64) -> Vec<f64> {
        let mut logits = self.params.bias.clone();
        for o in occ {
            let g = gate(o);
            if g == 0.0 {
                continue;
            }
            for (c, l) in logits.iter_mut().enumerate() {
                *l += g * self.params.weights[c][o.feature];
            }
        }
        logits
    }

    pub fn logits(&self, x: &Instance) -> Vec<f64> {
        self.logits_from(&self.occurrences(x), |_| 1.0)
    }

    /// Prediction with a real-valued presence weight per flattened token; an
    /// n-gram's contribution is scaled by the product of its tokens' presences.
    /// `presence` of all ones reproduces [`Classifier::predict`].
    pub fn predict_with_presence(&self, x: &Instance, presence: &[f64]) -> ProbVector {
        let occ = self.occurrences(x);
        let logits = self.logits_from(&occ, |o| {
            o.positions[..o.span].iter().map(|&p| presence[p]).product()
        });
        ProbVector::softmax(&logits)
    }

    /// Zeroes every weight on n-grams of the given field.
    pub fn zero_field(&mut self, field: usize) {
        for (j, &(f, _, _)) in self.params.features.iter().enumerate() {
            if f as usize == field {
                for w in self.params.weights.iter_mut() {
                    w[j] = 0.0;
                }
            }
        }
        self.fingerprint = self.compute_fingerprint();
    }

    /// One SGD step of cross-entropy + L2 on the given occurrences.
    /// Returns the loss gradient with respect to each occurrence's gate,
    /// evaluated before the update.
    pub(crate) fn sgd_step(&mut self, occ: &[Occurrence], label: usize, lr: f64) -> Vec<f64> {
        let logits = self.logits_from(occ, |_| 1.0);
        let probs = ProbVector::softmax(&logits);
        let delta: Vec<f64> = probs
            .as_slice()
            .iter()
            .enumerate()
            .map(|(c, &p)| p - if c == label { 1.0 } else { 0.0 })
            .collect();
        let gate_grad = occ
            .iter()
            .map(|o| {
                delta
                    .iter()
                    .enumerate()
                    .map(|(c, d)| d * self.params.weights[c][o.feature])
                    .sum()
            })
            .collect();
        let l2 = self.config.l2;
        for (c, d) in delta.iter().enumerate() {
            self.params.bias[c] -= lr * d;
            let row = &mut self.params.weights[c];
            for o in occ {
                let w = &mut row[o.feature];
                *w -= lr * (d + l2 * *w);
            }
        }
        gate_grad
    }

    pub(crate) fn refresh_fingerprint(&mut self) {
        self.fingerprint = self.compute_fingerprint();
    }
}

impl Classifier for LinearClassifier {
    fn predict(&self, x: &Instance) -> ProbVector {
        ProbVector::softmax(&self.logits(x))
    }

    fn class_count(&self) -> usize {
        self.params.classes
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }

    fn vocabulary(&self) -> Option<&[String]> {
        Some(&self.params.tokens)
    }

    fn logit_gradients(&self, x: &Instance) -> Option<LogitGradients> {
        let mut per_token = vec![vec![0.0; self.params.classes]; x.len()];
        for o in self.occurrences(x) {
            for &p in &o.positions[..o.span] {
                for (c, g) in per_token[p].iter_mut().enumerate() {
                    *g += self.params.weights[c][o.feature];
                }
            }
        }
        Some(LogitGradients { per_token })
    }
}

/// Hand-assembled linear model, mostly for constructions with known weights.
#[derive(Debug, Clone)]
pub struct LinearBuilder {
    classes: usize,
    order: usize,
    bias: Vec<f64>,
    entries: BTreeMap<(u16, String, Option<String>), Vec<f64>>,
}

impl LinearBuilder {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            order: 1,
            bias: vec![0.0; classes],
            entries: BTreeMap::new(),
        }
    }

    pub fn bias(mut self, bias: &[f64]) -> Self {
        self.bias = bias.to_vec();
        self
    }

    pub fn unigram(mut self, field: usize, token: &str, weights: &[f64]) -> Self {
        self.entries
            .insert((field as u16, token.into(), None), weights.to_vec());
        self
    }

    pub fn bigram(mut self, field: usize, first: &str, second: &str, weights: &[f64]) -> Self {
        self.order = 2;
        self.entries.insert(
            (field as u16, first.into(), Some(second.into())),
            weights.to_vec(),
        );
        self
    }

    pub fn build(self) -> Result<LinearClassifier> {
        let mut vocab = BTreeSet::new();
        for (_, a, b) in self.entries.keys() {
            vocab.insert(a.clone());
            if let Some(b) = b {
                vocab.insert(b.clone());
            }
        }
        let tokens: Vec<String> = vocab.into_iter().collect();
        let id = |t: &str| tokens.binary_search_by(|x| x.as_str().cmp(t)).unwrap() as u32;
        let mut keyed: Vec<(FeatureKey, &Vec<f64>)> = self
            .entries
            .iter()
            .map(|((f, a, b), w)| {
                let second = b.as_deref().map_or(NO_TOKEN, id);
                ((*f, id(a), second), w)
            })
            .collect();
        keyed.sort_by_key(|(k, _)| *k);
        let mut weights = vec![Vec::with_capacity(keyed.len()); self.classes];
        for (_, w) in &keyed {
            if w.len() != self.classes {
                return Err(Error::Config("weight vector length must equal class count".into()));
            }
            for (c, v) in w.iter().enumerate() {
                weights[c].push(*v);
            }
        }
        let params = LinearParams {
            classes: self.classes,
            features: keyed.iter().map(|(k, _)| *k).collect(),
            tokens,
            bias: self.bias,
            weights,
        };
        let config = LinearConfig { ngram_order: self.order, ..LinearConfig::default() };
        LinearClassifier::from_params(config, params)
    }
}

/// Class count implied by the data (`max label + 1`), rejecting empty and
/// single-class data.
pub fn class_count_of(data: &[Instance]) -> Result<usize> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let labels: BTreeSet<usize> = data.iter().map(|x| x.label).collect();
    if labels.len() < 2 {
        return Err(Error::SingleClass(*labels.iter().next().unwrap()));
    }
    Ok(labels.iter().next_back().unwrap() + 1)
}

/// Untrained (all-zero) model with the vocabulary and feature set of `data`.
pub(crate) fn empty_model(
    data: &[Instance],
    classes: usize,
    config: &LinearConfig,
) -> Result<LinearClassifier> {
    let mut vocab = BTreeSet::new();
    for x in data {
        for t in x.tokens() {
            if t != PAD {
                vocab.insert(String::from(t));
            }
        }
    }
    let tokens: Vec<String> = vocab.into_iter().collect();
    let index: BTreeMap<&str, u32> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i as u32))
        .collect();
    let mut features = BTreeSet::new();
    for x in data {
        for (fi, field) in x.fields.iter().enumerate() {
            let ids: Vec<Option<u32>> = field
                .tokens
                .iter()
                .map(|t| index.get(t.as_str()).copied())
                .collect();
            for (i, id) in ids.iter().enumerate() {
                let Some(a) = *id else { continue };
                features.insert((fi as u16, a, NO_TOKEN));
                if config.ngram_order >= 2 {
                    if let Some(Some(b)) = ids.get(i + 1) {
                        features.insert((fi as u16, a, *b));
                    }
                }
            }
        }
    }
    let n = features.len();
    let params = LinearParams {
        classes,
        tokens,
        features: features.into_iter().collect(),
        bias: vec![0.0; classes],
        weights: vec![vec![0.0; n]; classes],
    };
    LinearClassifier::from_params(config.clone(), params)
}

pub(crate) fn validate_labels(data: &[Instance], classes: usize) -> Result<()> {
    match data.iter().find(|x| x.label >= classes) {
        Some(x) => Err(Error::LabelOutOfRange {
            id: x.id.clone(),
            label: x.label,
            classes,
        }),
        None => Ok(()),
    }
}

pub(crate) fn epoch_rate(config: &LinearConfig, epoch: usize) -> f64 {
    config.learning_rate / (1.0 + epoch as f64 * 0.5)
}

/// Held-out summary of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_accuracy: f64,
    pub heldout_accuracy: f64,
    pub train_size: usize,
    pub heldout_size: usize,
}

/// Trains the linear classifier with shuffled SGD. The result depends only on
/// `(train, config)`; `heldout` is used for the report.
pub fn train_linear_classifier(
    train: &[Instance],
    heldout: &[Instance],
    config: &LinearConfig,
) -> Result<(LinearClassifier, TrainReport)> {
    config.validate()?;
    let classes = class_count_of(train)?;
    validate_labels(train, classes)?;
    validate_labels(heldout, classes)?;
    let mut model = empty_model(train, classes, config)?;
    let examples: Vec<Vec<Occurrence>> = train.iter().map(|x| model.occurrences(x)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let lr = epoch_rate(config, epoch);
        for &i in &order {
            model.sgd_step(&examples[i], train[i].label, lr);
        }
    }
    model.refresh_fingerprint();
    let report = TrainReport {
        train_accuracy: crate::model::accuracy(&model, train),
        heldout_accuracy: crate::model::accuracy(&model, heldout),
        train_size: train.len(),
        heldout_size: heldout.len(),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigmoid(z: f64) -> f64 {
        1.0 / (1.0 + libm::exp(-z))
    }

    #[test]
    fn builder_matches_sigmoid_of_weight_sum() {
        let m = LinearBuilder::new(2)
            .unigram(0, "good", &[0.0, 2.0])
            .unigram(0, "movie", &[0.0, 0.0])
            .build()
            .unwrap();
        let p = m.predict(&Instance::from_text("x", "good movie", 1));
        assert!((p.get(1) - sigmoid(2.0)).abs() < 1e-15);
    }

    #[test]
    fn pad_and_unknown_tokens_contribute_nothing() {
        let m = LinearBuilder::new(2)
            .unigram(0, "good", &[0.0, 2.0])
            .bigram(0, "good", "movie", &[0.0, 1.0])
            .unigram(0, "movie", &[0.0, 0.5])
            .build()
            .unwrap();
        let base = m.logits(&Instance::from_text("x", "zzz", 1));
        assert_eq!(base, vec![0.0, 0.0]);
        let full = m.logits(&Instance::from_text("x", "good movie", 1));
        assert!((full[1] - 3.5).abs() < 1e-15);
        let padded = m.logits(&Instance::from_text("x", "good movie", 1).with_replaced(1, PAD));
        assert!((padded[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_single_class_and_empty() {
        let one = [Instance::from_text("a", "x", 0), Instance::from_text("b", "y", 0)];
        assert_eq!(
            train_linear_classifier(&one, &[], &LinearConfig::default()).unwrap_err(),
            Error::SingleClass(0)
        );
        assert_eq!(
            train_linear_classifier(&[], &[], &LinearConfig::default()).unwrap_err(),
            Error::EmptyData
        );
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let train = [
            Instance::from_text("1", "good a", 1),
            Instance::from_text("2", "good b", 1),
            Instance::from_text("3", "bad a", 0),
            Instance::from_text("4", "bad b", 0),
        ];
        // Held-out instances recombine the same features in a different order.
        let heldout = [
            Instance::from_text("5", "b good", 1),
            Instance::from_text("6", "a good", 1),
            Instance::from_text("7", "b bad", 0),
            Instance::from_text("8", "a bad", 0),
        ];
        let cfg = LinearConfig { epochs: 30, ..LinearConfig::default() };
        let (m, report) = train_linear_classifier(&train, &heldout, &cfg).unwrap();
        assert_eq!(report.heldout_accuracy, 1.0);
        let (again, _) = train_linear_classifier(&train, &heldout, &cfg).unwrap();
        assert_eq!(m.fingerprint(), again.fingerprint());
        assert_eq!(m, again);
        let other = LinearConfig { seed: 9, ..cfg };
        let (m3, _) = train_linear_classifier(&train, &heldout, &other).unwrap();
        assert_ne!(m.fingerprint(), m3.fingerprint());
    }

    #[test]
    fn zero_field_removes_a_field_block() {
        let mut m = LinearBuilder::new(2)
            .unigram(0, "a", &[0.0, 1.0])
            .unigram(1, "a", &[0.0, 3.0])
            .build()
            .unwrap();
        let before = m.fingerprint();
        m.zero_field(1);
        assert_ne!(before, m.fingerprint());
        let x = Instance::pair(
            "p",
            crate::text::Field::new("document", vec!["a".into()]),
            crate::text::Field::new("question", vec!["a".into()]),
            1,
        );
        assert!((m.logits(&x)[1] - 1.0).abs() < 1e-15);
    }
}
