use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};

use super::lexicon::SynonymLexicon;
use super::similarity::{spearman, subset_f1, Substitution};
use crate::attribution::{attribute, attribute_loo, Method};
use crate::error::{Error, Result};
use crate::infill::InfillModel;
use crate::model::Classifier;
use crate::perturb::rank_features;
use crate::rationale::RationaleModel;
use crate::text::Instance;
use crate::util::token_hash;

/// Substitution budget for an attack: `floor(ratio · len)`, so the used
/// ratio never exceeds `ratio`. May be zero for short inputs.
pub fn attack_budget(len: usize, ratio: f64) -> usize {
    (libm::floor(ratio * len as f64 + 1e-9) as usize).min(len)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub same_label: bool,
    pub ratio_used: f64,
    pub all_subs_in_lexicon: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Spearman correlation between original and adversarial attributions.
    RankCorrelation,
    /// Subset F1 between original and adversarial rationale selections.
    SubsetF1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub original: Instance,
    pub adversarial: Instance,
    pub substitutions: Vec<Substitution>,
    pub objective_kind: Objective,
    /// Lower is a stronger attack.
    pub objective: f64,
    pub predicted_label: usize,
    pub budget: usize,
    pub constraints: ConstraintReport,
    /// Attribution method attacked; empty for subset attacks.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub method: String,
}

/// A candidate partial attack.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamEntry {
    pub instance: Instance,
    /// Sorted by position.
    pub substitutions: Vec<Substitution>,
    pub objective: f64,
    pub hash: u64,
}

impl BeamEntry {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.objective
            .total_cmp(&other.objective)
            .then(self.hash.cmp(&other.hash))
    }
}

/// Bounded set of entries ordered by `(objective, token hash)`.
#[derive(Debug, Clone)]
pub struct Beam {
    capacity: usize,
    entries: Vec<BeamEntry>,
}

impl Beam {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), entries: Vec::new() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[BeamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Merges `extra` and keeps the best `capacity` entries.
    pub fn extend(&mut self, extra: impl IntoIterator<Item = BeamEntry>) {
        self.entries.extend(extra);
        self.entries.sort_by(BeamEntry::key_cmp);
        self.entries.truncate(self.capacity);
    }
}

/// Outcome of a search: the best label-preserving candidate with at least one
/// substitution, or the unmodified root when none survived.
pub(crate) struct SearchOutcome {
    pub best: BeamEntry,
}

/// Beam search over single-position synonym swaps.
///
/// Positions are visited in `order`. At each position every beam entry with
/// spare budget spawns one child per synonym; `evaluate` returns the
/// objective, or `None` when the child violates the label constraint (such
/// children are discarded). The beam keeps parents and children, so with
/// enough capacity it enumerates every substitution set whose prefixes (in
/// visiting order) all satisfy the constraint.
pub(crate) fn beam_search(
    x: &Instance,
    order: &[usize],
    lexicon: &SynonymLexicon,
    budget: usize,
    capacity: usize,
    root_objective: f64,
    mut evaluate: impl FnMut(&Instance) -> Option<f64>,
) -> SearchOutcome {
    let root = BeamEntry {
        instance: x.clone(),
        substitutions: Vec::new(),
        objective: root_objective,
        hash: token_hash(x.tokens()),
    };
    let mut beam = Beam::new(capacity);
    beam.extend([root.clone()]);
    let mut best: Option<BeamEntry> = None;
    for &pos in order {
        let old = x.token(pos).unwrap();
        let synonyms = lexicon.synonyms(old);
        if synonyms.is_empty() {
            continue;
        }
        let mut children = Vec::new();
        for parent in beam.entries().iter().filter(|e| e.substitutions.len() < budget) {
            for syn in synonyms {
                let instance = parent.instance.with_replaced(pos, &syn.word);
                let Some(objective) = evaluate(&instance) else { continue };
                let mut substitutions = parent.substitutions.clone();
                substitutions.push(Substitution {
                    position: pos,
                    old: old.into(),
                    new: syn.word.clone(),
                });
                substitutions.sort();
                let hash = token_hash(instance.tokens());
                let child = BeamEntry { instance, substitutions, objective, hash };
                if best.as_ref().map_or(true, |b| child.key_cmp(b) == Ordering::Less) {
                    best = Some(child.clone());
                }
                children.push(child);
            }
        }
        beam.extend(children);
    }
    SearchOutcome { best: best.unwrap_or(root) }
}

/// Positions in descending leave-one-out importance, ties to the earlier one.
pub fn exploration_order<M: Classifier + ?Sized>(model: &M, x: &Instance) -> Result<Vec<usize>> {
    let loo = attribute_loo(model, x)?;
    Ok(rank_features(&loo.scores, x.len()))
}

fn finish(
    x: &Instance,
    outcome: SearchOutcome,
    lexicon: &SynonymLexicon,
    objective_kind: Objective,
    predicted_label: usize,
    adversarial_label: usize,
    budget: usize,
    method: String,
) -> AttackRecord {
    let best = outcome.best;
    let all_in_lexicon = best
        .substitutions
        .iter()
        .all(|s| lexicon.contains_pair(&s.old, &s.new));
    AttackRecord {
        original: x.clone(),
        constraints: ConstraintReport {
            same_label: predicted_label == adversarial_label,
            ratio_used: best.substitutions.len() as f64 / x.len() as f64,
            all_subs_in_lexicon: all_in_lexicon,
        },
        adversarial: best.instance,
        substitutions: best.substitutions,
        objective_kind,
        objective: best.objective,
        predicted_label,
        budget,
        method,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub ratio: f64,
    pub beam_capacity: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self { ratio: 0.2, beam_capacity: 100 }
    }
}

fn check(x: &Instance, config: &AttackConfig) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyInstance(x.id.clone()));
    }
    if !(config.ratio > 0.0 && config.ratio <= 1.0) {
        return Err(Error::Config(alloc::format!(
            "perturbation ratio must lie in (0, 1], got {}",
            config.ratio
        )));
    }
    Ok(())
}

/// Searches for a label-preserving synonym rewrite of `x` whose attribution
/// ranks correlate least with the original's.
pub fn attack_rank_divergence<M: Classifier + ?Sized>(
    model: &M,
    x: &Instance,
    method: Method,
    infill: Option<&InfillModel>,
    lexicon: &SynonymLexicon,
    config: &AttackConfig,
) -> Result<AttackRecord> {
    check(x, config)?;
    let original = attribute(method, model, x, infill)?;
    let label = original.class;
    let order = exploration_order(model, x)?;
    let budget = attack_budget(x.len(), config.ratio);
    let mut failure = None;
    let outcome = beam_search(x, &order, lexicon, budget, config.beam_capacity, 1.0, |cand| {
        if model.predict(cand).argmax() != label {
            return None;
        }
        match attribute(method, model, cand, infill).and_then(|r| spearman(&original.scores, &r.scores)) {
            Ok(rho) => Some(rho),
            Err(e) => {
                failure.get_or_insert(e);
                None
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let adv_label = model.predict(&outcome.best.instance).argmax();
    Ok(finish(x, outcome, lexicon, Objective::RankCorrelation, label, adv_label, budget, method.name().into()))
}

/// Searches for a label-preserving synonym rewrite of `x` whose rationale
/// subset overlaps least with the original's (synonyms count as identical).
pub fn attack_subset_divergence(
    model: &RationaleModel,
    x: &Instance,
    lexicon: &SynonymLexicon,
    config: &AttackConfig,
) -> Result<AttackRecord> {
    check(x, config)?;
    let label = model.predict(x).argmax();
    let original = model.select(x);
    let order = exploration_order(model, x)?;
    let budget = attack_budget(x.len(), config.ratio);
    let outcome = beam_search(x, &order, lexicon, budget, config.beam_capacity, 1.0, |cand| {
        if model.predict(cand).argmax() != label {
            return None;
        }
        let subs = substitutions_between(x, cand);
        Some(subset_f1(&original, &model.select(cand), &subs))
    });
    let adv_label = model.predict(&outcome.best.instance).argmax();
    Ok(finish(x, outcome, lexicon, Objective::SubsetF1, label, adv_label, budget, String::new()))
}

/// Position-wise differences between two same-length instances.
pub fn substitutions_between(original: &Instance, adversarial: &Instance) -> Vec<Substitution> {
    original
        .tokens()
        .zip(adversarial.tokens())
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(position, (a, b))| Substitution { position, old: a.into(), new: b.into() })
        .collect()
}
