//! Replacement-word distributions from corpus n-gram counts.
//!
//! For order 2 the distribution at a position is the average of the
//! left-context conditional `P(w | previous token)` and the right-context
//! conditional `P(w | next token)`, each backing off to the unigram
//! distribution when its context was never observed. Sentence boundaries are
//! per field. The original token is excluded, the list is truncated to the
//! `cap` most probable words and renormalized.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::text::{Instance, PAD};

const BOS: &str = "<s>";
const EOS: &str = "</s>";

#[derive(Debug, Clone, Default)]
struct Counts {
    total: u64,
    words: BTreeMap<String, u64>,
}

impl Counts {
    fn add(&mut self, w: &str) {
        self.total += 1;
        *self.words.entry(w.into()).or_default() += 1;
    }
}

/// Candidate replacements for one position.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    /// `(token, probability)`, descending by probability then ascending token.
    pub words: Vec<(String, f64)>,
    /// True when the distribution came from the unigram fallback because the
    /// contextual distribution had no usable mass.
    pub fallback: bool,
}

impl Candidates {
    pub fn argmax(&self) -> Option<&str> {
        self.words.first().map(|(w, _)| w.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct InfillModel {
    order: usize,
    cap: usize,
    unigram: Counts,
    left: BTreeMap<String, Counts>,
    right: BTreeMap<String, Counts>,
}

/// Builds an infill model of the given order (1 or 2) from `corpus`.
pub fn build_infill_model(corpus: &[Instance], order: usize, cap: usize) -> Result<InfillModel> {
    if corpus.is_empty() {
        return Err(Error::EmptyData);
    }
    if cap == 0 || !(1..=2).contains(&order) {
        return Err(Error::Config("infill needs order 1|2 and cap >= 1".into()));
    }
    let mut model = InfillModel {
        order,
        cap,
        unigram: Counts::default(),
        left: BTreeMap::new(),
        right: BTreeMap::new(),
    };
    for x in corpus {
        for field in &x.fields {
            let toks = &field.tokens;
            for (i, w) in toks.iter().enumerate() {
                if w == PAD {
                    continue;
                }
                model.unigram.add(w);
                let prev = if i == 0 { BOS } else { toks[i - 1].as_str() };
                let next = toks.get(i + 1).map_or(EOS, String::as_str);
                if prev != PAD {
                    model.left.entry(prev.into()).or_default().add(w);
                }
                if next != PAD {
                    model.right.entry(next.into()).or_default().add(w);
                }
            }
        }
    }
    Ok(model)
}

impl InfillModel {
    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap.max(1);
        self
    }

    fn add_scaled(dist: &mut BTreeMap<String, f64>, counts: &Counts, scale: f64) {
        for (w, &c) in &counts.words {
            *dist.entry(w.clone()).or_default() += scale * c as f64 / counts.total as f64;
        }
    }

    fn finish(&self, mut dist: BTreeMap<String, f64>, original: &str) -> Vec<(String, f64)> {
        dist.remove(original);
        dist.remove(PAD);
        let mut words: Vec<(String, f64)> = dist.into_iter().filter(|(_, p)| *p > 0.0).collect();
        words.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        words.truncate(self.cap);
        let total: f64 = words.iter().map(|(_, p)| p).sum();
        for (_, p) in words.iter_mut() {
            *p /= total;
        }
        words
    }

    /// Replacement distribution for flattened position `pos` of `x`.
    ///
    /// Panics if `pos` is out of range.
    pub fn candidates(&self, x: &Instance, pos: usize) -> Candidates {
        let (fi, off) = x.locate(pos).expect("position out of range");
        let toks = &x.fields[fi].tokens;
        let original = toks[off].as_str();
        let mut dist = BTreeMap::new();
        if self.order == 1 {
            Self::add_scaled(&mut dist, &self.unigram, 1.0);
        } else {
            let prev = if off == 0 { BOS } else { toks[off - 1].as_str() };
            let next = toks.get(off + 1).map_or(EOS, String::as_str);
            let left = self.left.get(prev).unwrap_or(&self.unigram);
            let right = self.right.get(next).unwrap_or(&self.unigram);
            Self::add_scaled(&mut dist, left, 0.5);
            Self::add_scaled(&mut dist, right, 0.5);
        }
        let words = self.finish(dist, original);
        if !words.is_empty() {
            return Candidates { words, fallback: false };
        }
        let mut uni = BTreeMap::new();
        Self::add_scaled(&mut uni, &self.unigram, 1.0);
        Candidates {
            words: self.finish(uni, original),
            fallback: true,
        }
    }

    /// Words seen in the corpus, ascending.
    pub fn vocabulary(&self) -> impl Iterator<Item = &str> + '_ {
        self.unigram.words.keys().map(String::as_str)
    }
}
