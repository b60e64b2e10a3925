#![allow(dead_code, unused_imports)]

use attraudit_core::attack::{LexiconEntry, Synonym, SynonymLexicon};
use attraudit_core::linear::{LinearBuilder, LinearClassifier};
use attraudit_core::{Field, Instance};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod exhaustive;
pub use exhaustive::exhaustive_attack;

pub const VOCAB: [&str; 12] = [
    "good", "bad", "movie", "plot", "great", "awful", "the", "was", "not", "fine", "dull", "fun",
];

/// Random linear model over [`VOCAB`] (unigrams plus a few bigrams).
pub fn random_model(seed: u64, classes: usize) -> LinearClassifier {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..classes).map(|_| rng.random_range(-2.0..2.0)).collect() };
    let bias = w(&mut rng);
    let mut b = LinearBuilder::new(classes).bias(&bias);
    for field in 0..2 {
        for t in VOCAB {
            let v = w(&mut rng);
            b = b.unigram(field, t, &v);
        }
        for _ in 0..6 {
            let a = VOCAB[rng.random_range(0..VOCAB.len())];
            let c = VOCAB[rng.random_range(0..VOCAB.len())];
            let v = w(&mut rng);
            b = b.bigram(field, a, c, &v);
        }
    }
    b.build().unwrap()
}

pub fn words(max_len: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(&VOCAB[..]), 1..=max_len)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

pub fn instance(max_len: usize) -> impl Strategy<Value = Instance> {
    words(max_len).prop_map(|t| Instance::single("x", t, 0))
}

/// One- or two-field instance with `1..=max_len` tokens in total.
pub fn any_instance(max_len: usize) -> impl Strategy<Value = Instance> {
    prop_oneof![
        instance(max_len),
        (words(max_len), 0usize..=1).prop_map(move |(t, cut)| {
            let cut = if t.len() > 1 { cut.min(t.len() - 1).max(1) } else { 1.min(t.len()) };
            let (a, b) = t.split_at(cut);
            Instance::pair("x", Field::new("premise", a.to_vec()), Field::new("hypothesis", b.to_vec()), 0)
        }),
    ]
}

pub fn small_lexicon() -> SynonymLexicon {
    let groups: [&[&str]; 4] = [&["good", "great", "fine"], &["bad", "awful", "dull"], &["movie", "plot"], &["fun", "great"]];
    let entries = groups.iter().flat_map(|g| {
        g.iter().map(move |t| LexiconEntry {
            token: t.to_string(),
            synonyms: g.iter().filter(|w| *w != t).map(|w| Synonym { word: w.to_string(), sim: 0.8 }).collect(),
        })
    });
    SynonymLexicon::new(entries, 0.7, true).unwrap()
}
