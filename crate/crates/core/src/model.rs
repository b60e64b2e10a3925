//! The prediction contract shared by every model in the toolkit.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::Instance;

/// Per-class probabilities. Entries lie in `[0, 1]` and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidProbabilities(format!(
                "{} classes, need at least 2",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidProbabilities(format!("entry {p} outside [0, 1]")));
        }
        let total: f64 = probs.iter().sum();
        if libm::fabs(total - 1.0) > Self::TOLERANCE {
            return Err(Error::InvalidProbabilities(format!("entries sum to {total}")));
        }
        Ok(Self(probs))
    }

    /// Numerically stable softmax; always valid.
    pub fn softmax(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| libm::exp(l - max)).collect();
        let total: f64 = exps.iter().sum();
        Self(exps.into_iter().map(|e| e / total).collect())
    }

    pub fn uniform(classes: usize) -> Self {
        Self(alloc::vec![1.0 / classes as f64; classes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// `p(class) - max_{y != class} p(y)`: distance to the decision boundary.
    pub fn margin(&self, class: usize) -> f64 {
        let rival = self
            .0
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != class)
            .map(|(_, &p)| p)
            .fold(f64::NEG_INFINITY, f64::max);
        self.0[class] - rival
    }
}

/// Analytic derivative of every class logit with respect to the presence of
/// each flattened token (`per_token[i][c]`).
#[derive(Debug, Clone, PartialEq)]
pub struct LogitGradients {
    pub per_token: Vec<Vec<f64>>,
}

/// A text classifier. `predict` must be deterministic and must not depend on
/// the instance id or field names beyond field order.
pub trait Classifier {
    fn predict(&self, x: &Instance) -> ProbVector;

    fn class_count(&self) -> usize;

    /// Stable identity of the trained parameters.
    fn fingerprint(&self) -> String;

    /// Known tokens, if the model has a vocabulary.
    fn vocabulary(&self) -> Option<&[String]> {
        None
    }

    /// Presence gradients of the logits, for models where they are analytic.
    fn logit_gradients(&self, _x: &Instance) -> Option<LogitGradients> {
        None
    }
}

impl<M: Classifier + ?Sized> Classifier for &M {
    fn predict(&self, x: &Instance) -> ProbVector {
        (**self).predict(x)
    }
    fn class_count(&self) -> usize {
        (**self).class_count()
    }
    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }
    fn vocabulary(&self) -> Option<&[String]> {
        (**self).vocabulary()
    }
    fn logit_gradients(&self, x: &Instance) -> Option<LogitGradients> {
        (**self).logit_gradients(x)
    }
}

/// Model that ignores its input and always returns the uniform distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformModel {
    pub classes: usize,
}

impl Classifier for UniformModel {
    fn predict(&self, _x: &Instance) -> ProbVector {
        ProbVector::uniform(self.classes)
    }

    fn class_count(&self) -> usize {
        self.classes
    }

    fn fingerprint(&self) -> String {
        format!("uniform-{}", self.classes)
    }

    fn logit_gradients(&self, x: &Instance) -> Option<LogitGradients> {
        Some(LogitGradients {
            per_token: alloc::vec![alloc::vec![0.0; self.classes]; x.len()],
        })
    }
}

/// Fraction of instances whose argmax equals the gold label.
pub fn accuracy<M: Classifier + ?Sized>(model: &M, data: &[Instance]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = data
        .iter()
        .filter(|x| model.predict(x).argmax() == x.label)
        .count();
    hits as f64 / data.len() as f64
}
