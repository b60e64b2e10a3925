//! Consistency attacks on attributions and rationales, and the scaffolding
//! wrapper.
//!
//! These attacks look for synonym rewrites that keep the predicted label yet
//! change the explanation. A successful attack is not by itself evidence of
//! an unreliable attribution method: keeping the label is a weak constraint,
//! and when a select-then-predict model picks a different subset, the model's
//! reasoning really did change.

mod lexicon;
pub mod scaffold;
mod search;
mod similarity;

pub use lexicon::{LexiconEntry, Synonym, SynonymLexicon, DEFAULT_SIMILARITY_THRESHOLD};
pub use scaffold::{
    misfire_rate, scaffold_wrapper, LengthRegistryDetector, MisfireReport, PerturbationDetector,
    ScaffoldedModel,
};
pub use search::{
    attack_budget, attack_rank_divergence, attack_subset_divergence, exploration_order,
    substitutions_between, AttackConfig, AttackRecord, Beam, BeamEntry, ConstraintReport,
    Objective,
};
pub use similarity::{average_ranks, spearman, subset_f1, Substitution};
