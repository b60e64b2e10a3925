//! Deterministic synthetic corpora and the bundled synonym lexicon.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{LexiconEntry, Synonym};
use crate::text::{Field, Instance};

pub const MINI_SENTIMENT_SEED: u64 = 20_211_104;
pub const TWO_FIELD_SEED: u64 = 7_341;
pub const PLANTED_KEY_SEED: u64 = 1_913;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<Instance>,
    pub dev: Vec<Instance>,
}

impl Split {
    fn from_all(mut all: Vec<Instance>, dev_every: usize) -> Self {
        let mut train = Vec::new();
        let mut dev = Vec::new();
        for (i, x) in all.drain(..).enumerate() {
            if i % dev_every == dev_every - 1 {
                dev.push(x);
            } else {
                train.push(x);
            }
        }
        Self { train, dev }
    }

    pub fn all(&self) -> impl Iterator<Item = &Instance> + '_ {
        self.train.iter().chain(&self.dev)
    }
}

/// Word groups with pairwise similarity. Every member of a group is a
/// synonym of every other at the group's similarity.
struct Group {
    words: &'static [&'static str],
    sim: f64,
}

const POSITIVE: &[Group] = &[
    Group { words: &["good", "fine", "nice", "decent"], sim: 0.82 },
    Group { words: &["great", "excellent", "superb", "terrific"], sim: 0.88 },
    Group { words: &["tasty", "delicious", "flavorful"], sim: 0.9 },
    Group { words: &["friendly", "welcoming", "kind"], sim: 0.79 },
    Group { words: &["clean", "tidy", "spotless"], sim: 0.84 },
    Group { words: &["cheap", "affordable", "reasonable"], sim: 0.76 },
];

const NEGATIVE: &[Group] = &[
    Group { words: &["bad", "poor", "lousy", "mediocre"], sim: 0.8 },
    Group { words: &["terrible", "horrible", "awful", "dreadful"], sim: 0.9 },
    Group { words: &["bland", "tasteless", "flavorless"], sim: 0.86 },
    Group { words: &["rude", "unfriendly", "impolite"], sim: 0.83 },
    Group { words: &["dirty", "filthy", "grimy"], sim: 0.87 },
    Group { words: &["overpriced", "expensive", "pricey"], sim: 0.74 },
];

const NOUNS: &[Group] = &[
    Group { words: &["food", "meal", "dish"], sim: 0.81 },
    Group { words: &["staff", "employees", "crew"], sim: 0.78 },
    Group { words: &["place", "spot", "venue"], sim: 0.77 },
    Group { words: &["room", "hall"], sim: 0.72 },
    Group { words: &["waiter", "server"], sim: 0.92 },
    Group { words: &["coffee"], sim: 1.0 },
    Group { words: &["dessert", "pastry"], sim: 0.73 },
    Group { words: &["menu"], sim: 1.0 },
    Group { words: &["view", "scenery"], sim: 0.75 },
];

const INTENSIFIERS: &[Group] = &[
    Group { words: &["very", "really", "truly", "quite"], sim: 0.8 },
];

/// Synonym pairs listed with similarity below the default threshold.
const WEAK_PAIRS: &[(&str, &str, f64)] = &[
    ("good", "great", 0.62),
    ("bad", "terrible", 0.64),
    ("food", "coffee", 0.41),
    ("cheap", "overpriced", 0.18),
    ("nice", "kind", 0.55),
    ("place", "room", 0.52),
];

const SUBJECTS: &[&str] = &["we", "i", "they", "my friends", "our group"];
const VERBS: &[&str] = &["ordered", "tried", "visited", "saw", "liked the look of", "asked about"];
const CONNECTORS: &[&str] = &["and", "but", "also", "then", "overall", "honestly"];
const DETERMINERS: &[&str] = &["the", "this", "that", "our"];
const NEGATORS: &[&str] = &["not", "never"];

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &'a [&'a str]) -> &'a str {
    xs.choose(rng).copied().unwrap()
}

fn pick_group<'a>(rng: &mut ChaCha8Rng, gs: &'a [Group]) -> &'a str {
    let g = gs.choose(rng).unwrap();
    g.words.choose(rng).copied().unwrap()
}

fn push_words(out: &mut Vec<String>, phrase: &str) {
    out.extend(phrase.split_whitespace().map(String::from));
}

/// Appends one clause and returns its polarity contribution.
fn sentiment_clause(rng: &mut ChaCha8Rng, out: &mut Vec<String>) -> i32 {
    match rng.random_range(0..10) {
        0..=1 => {
            push_words(out, pick(rng, SUBJECTS));
            push_words(out, pick(rng, VERBS));
            push_words(out, pick(rng, DETERMINERS));
            push_words(out, pick_group(rng, NOUNS));
            0
        }
        _ => {
            push_words(out, pick(rng, DETERMINERS));
            push_words(out, pick_group(rng, NOUNS));
            out.push(if rng.random_bool(0.5) { "was".into() } else { "is".into() });
            let negated = rng.random_bool(0.18);
            if negated {
                out.push(pick(rng, NEGATORS).into());
            }
            if !negated && rng.random_bool(0.35) {
                out.push(pick_group(rng, INTENSIFIERS).into());
            }
            let positive = rng.random_bool(0.5);
            let strong = rng.random_bool(0.3);
            let groups = if positive { POSITIVE } else { NEGATIVE };
            let g = if strong { &groups[1] } else { groups.choose(rng).unwrap() };
            out.push(g.words.choose(rng).copied().unwrap().into());
            let weight = if core::ptr::eq(g, &groups[1]) { 2 } else { 1 };
            let sign = if positive != negated { 1 } else { -1 };
            sign * weight
        }
    }
}

/// Binary review-style corpus: label 1 when the summed clause polarity is
/// positive. Negation flips a clause; a small share of labels is noisy.
pub fn mini_sentiment(seed: u64, n: usize) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all = Vec::with_capacity(n);
    while all.len() < n {
        let target = rng.random_range(10..=25);
        let mut tokens = Vec::new();
        let mut score = 0;
        while tokens.len() < target {
            if !tokens.is_empty() {
                tokens.push(pick(&mut rng, CONNECTORS).into());
            }
            score += sentiment_clause(&mut rng, &mut tokens);
        }
        if tokens.len() > 25 || score.abs() < 2 {
            continue;
        }
        let mut label = usize::from(score > 0);
        if rng.random_bool(0.03) {
            label = 1 - label;
        }
        all.push(Instance::single(format!("ms-{:04}", all.len()), tokens, label));
    }
    Split::from_all(all, 5)
}

/// The default bundled sentiment corpus: 2000 instances, 1600 train / 400 dev.
pub fn bundled_mini_sentiment() -> Split {
    mini_sentiment(MINI_SENTIMENT_SEED, 2000)
}

fn group_entries(groups: &[Group], out: &mut Vec<LexiconEntry>) {
    for g in groups {
        for &w in g.words {
            let synonyms: Vec<Synonym> = g
                .words
                .iter()
                .filter(|&&o| o != w)
                .map(|&o| Synonym { word: o.into(), sim: g.sim })
                .collect();
            if !synonyms.is_empty() {
                out.push(LexiconEntry { token: w.into(), synonyms });
            }
        }
    }
}

/// Lexicon entries covering the sentiment corpus word groups, including
/// some pairs below the default similarity threshold.
pub fn bundled_lexicon_entries() -> Vec<LexiconEntry> {
    let mut out = Vec::new();
    for groups in [POSITIVE, NEGATIVE, NOUNS, INTENSIFIERS] {
        group_entries(groups, &mut out);
    }
    for &(a, b, sim) in WEAK_PAIRS {
        out.push(LexiconEntry { token: a.into(), synonyms: alloc::vec![Synonym { word: b.into(), sim }] });
    }
    out.push(LexiconEntry {
        token: "not".into(),
        synonyms: alloc::vec![Synonym { word: "never".into(), sim: 0.71 }],
    });
    out
}

const DOC_FILLER: &[&str] = &[
    "the", "file", "was", "reviewed", "by", "a", "clerk", "on", "monday", "after", "several",
    "weeks", "of", "delay", "and", "notes", "were", "added", "to", "record", "office", "staff",
    "letter", "sent", "form", "copies", "archive", "desk",
];
const DOC_YES: &[&str] = &["approved", "accepted", "granted"];
const DOC_NO: &[&str] = &["denied", "rejected", "refused"];
const QUESTION_FILLER: &[&str] = &[
    "was", "the", "request", "claim", "application", "what", "happened", "to", "outcome", "of",
    "final", "decision",
];
const QUESTION_YES: &str = "likely";
const QUESTION_NO: &str = "doubtful";

/// Two-field document/question corpus. A `decidable` share of instances
/// carries the answer in the document; the rest only have a question cue
/// that agrees with the label 80% of the time.
pub fn planted_two_field(seed: u64, n: usize, decidable: f64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all = Vec::with_capacity(n);
    for i in 0..n {
        let label = rng.random_range(0..2usize);
        let mut doc: Vec<String> =
            (0..rng.random_range(8..=14)).map(|_| pick(&mut rng, DOC_FILLER).into()).collect();
        let mut question: Vec<String> =
            (0..rng.random_range(4..=7)).map(|_| pick(&mut rng, QUESTION_FILLER).into()).collect();
        if rng.random_bool(decidable) {
            let cue = pick(&mut rng, if label == 1 { DOC_YES } else { DOC_NO });
            let at = rng.random_range(0..=doc.len());
            doc.insert(at, cue.into());
        } else {
            let agrees = rng.random_bool(0.8);
            let cue = if (label == 1) == agrees { QUESTION_YES } else { QUESTION_NO };
            let at = rng.random_range(0..=question.len());
            question.insert(at, cue.into());
        }
        all.push(Instance::pair(
            format!("tf-{i:04}"),
            Field::new("document", doc),
            Field::new("question", question),
            label,
        ));
    }
    Split::from_all(all, 5)
}

pub fn bundled_two_field() -> Split {
    planted_two_field(TWO_FIELD_SEED, 1000, 0.7)
}

const KEY_FILLER: &[&str] = &[
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet",
    "kilo", "lima", "mike", "november", "oscar", "papa", "quebec", "romeo", "sierra", "tango",
];

/// Single-field corpus whose label is the presence of the token `key`.
pub fn planted_key(seed: u64, n: usize) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all = Vec::with_capacity(n);
    for i in 0..n {
        let label = rng.random_range(0..2usize);
        let mut tokens: Vec<String> =
            (0..rng.random_range(8..=20)).map(|_| pick(&mut rng, KEY_FILLER).into()).collect();
        if label == 1 {
            let at = rng.random_range(0..tokens.len());
            tokens[at] = "key".into();
        }
        all.push(Instance::single(format!("pk-{i:04}"), tokens, label));
    }
    Split::from_all(all, 5)
}

pub fn bundled_planted_key() -> Split {
    planted_key(PLANTED_KEY_SEED, 1000)
}
