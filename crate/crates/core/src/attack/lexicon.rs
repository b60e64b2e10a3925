use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synonym {
    pub word: String,
    pub sim: f64,
}

/// One lexicon line: a token and its candidate synonyms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconEntry {
    pub token: String,
    pub synonyms: Vec<Synonym>,
}

/// Static synonym table. Lists are sorted by descending similarity, then word.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SynonymLexicon {
    entries: BTreeMap<String, Vec<Synonym>>,
    threshold: f64,
    symmetric: bool,
}

impl SynonymLexicon {
    /// Builds a lexicon, keeping synonyms with `sim >= threshold`. With
    /// `symmetric`, every `a → b` also adds `b → a` (keeping the larger
    /// similarity if both are given). Self-synonyms are dropped.
    pub fn new(
        entries: impl IntoIterator<Item = LexiconEntry>,
        threshold: f64,
        symmetric: bool,
    ) -> Result<Self> {
        let mut table: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        let mut insert = |a: &str, b: &str, sim: f64| {
            let slot = table.entry(a.into()).or_default().entry(b.into()).or_insert(sim);
            if sim > *slot {
                *slot = sim;
            }
        };
        for e in entries {
            for s in &e.synonyms {
                if !(s.sim > 0.0 && s.sim <= 1.0) {
                    return Err(Error::Config(format!(
                        "similarity {} for `{}` → `{}` outside (0, 1]",
                        s.sim, e.token, s.word
                    )));
                }
                if s.word == e.token || s.sim < threshold {
                    continue;
                }
                insert(&e.token, &s.word, s.sim);
                if symmetric {
                    insert(&s.word, &e.token, s.sim);
                }
            }
        }
        let entries = table
            .into_iter()
            .map(|(token, syns)| {
                let mut list: Vec<Synonym> =
                    syns.into_iter().map(|(word, sim)| Synonym { word, sim }).collect();
                list.sort_by(|a, b| b.sim.total_cmp(&a.sim).then_with(|| a.word.cmp(&b.word)));
                (token, list)
            })
            .collect();
        Ok(Self { entries, threshold, symmetric })
    }

    pub fn synonyms(&self, token: &str) -> &[Synonym] {
        self.entries.get(token).map_or(&[], Vec::as_slice)
    }

    pub fn contains_pair(&self, old: &str, new: &str) -> bool {
        self.synonyms(old).iter().any(|s| s.word == new)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in token order, for serialization.
    pub fn entries(&self) -> impl Iterator<Item = LexiconEntry> + '_ {
        self.entries.iter().map(|(t, s)| LexiconEntry { token: t.clone(), synonyms: s.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn entry(token: &str, syns: &[(&str, f64)]) -> LexiconEntry {
        LexiconEntry {
            token: token.into(),
            synonyms: syns.iter().map(|(w, s)| Synonym { word: (*w).into(), sim: *s }).collect(),
        }
    }

    #[test]
    fn threshold_self_and_symmetry() {
        let lex = SynonymLexicon::new(
            vec![entry("good", &[("fine", 0.8), ("good", 1.0), ("ok", 0.5), ("great", 0.9)])],
            0.7,
            true,
        )
        .unwrap();
        let words: Vec<&str> = lex.synonyms("good").iter().map(|s| s.word.as_str()).collect();
        assert_eq!(words, ["great", "fine"]);
        assert!(lex.contains_pair("fine", "good"));
        assert!(!lex.contains_pair("good", "ok"));
        assert!(lex.synonyms("missing").is_empty());
    }

    #[test]
    fn rejects_bad_similarity() {
        assert!(SynonymLexicon::new(vec![entry("a", &[("b", 1.5)])], 0.7, false).is_err());
        assert!(SynonymLexicon::new(vec![entry("a", &[("b", 0.0)])], 0.0, false).is_err());
    }
}
