//! Instances, fields and tokenization.
//!
//! An [`Instance`] holds one or two named token sequences. Attribution scores
//! and modification positions always refer to the *flattened* sequence: the
//! fields concatenated in order (document before question, premise before
//! hypothesis).

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved padding token. The tokenizer lowercases and splits brackets off,
/// so it can never produce this string from raw text.
pub const PAD: &str = "[PAD]";

/// Lowercases, splits on whitespace and detaches ASCII punctuation into
/// single-character tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for ch in chunk.chars() {
            if ch.is_ascii_punctuation() {
                if !word.is_empty() {
                    out.push(core::mem::take(&mut word));
                }
                out.push(String::from(ch));
            } else {
                word.extend(ch.to_lowercase());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub tokens: Vec<String>,
}

impl Field {
    pub fn new(name: impl Into<String>, tokens: Vec<String>) -> Self {
        Self { name: name.into(), tokens }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub fields: Vec<Field>,
    pub label: usize,
}

impl Instance {
    /// Single-field instance named `text`.
    pub fn single(id: impl Into<String>, tokens: Vec<String>, label: usize) -> Self {
        Self {
            id: id.into(),
            fields: alloc::vec![Field::new("text", tokens)],
            label,
        }
    }

    /// Convenience constructor from a whitespace-separated token string.
    pub fn from_text(id: impl Into<String>, text: &str, label: usize) -> Self {
        Self::single(id, tokenize(text), label)
    }

    pub fn pair(
        id: impl Into<String>,
        first: Field,
        second: Field,
        label: usize,
    ) -> Self {
        Self {
            id: id.into(),
            fields: alloc::vec![first, second],
            label,
        }
    }

    /// Total token count over all fields.
    pub fn len(&self) -> usize {
        self.fields.iter().map(|f| f.tokens.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattened tokens, field by field.
    pub fn tokens(&self) -> impl Iterator<Item = &str> + '_ {
        self.fields
            .iter()
            .flat_map(|f| f.tokens.iter().map(String::as_str))
    }

    /// Maps a flattened position to `(field index, offset within field)`.
    pub fn locate(&self, pos: usize) -> Option<(usize, usize)> {
        let mut rest = pos;
        for (fi, f) in self.fields.iter().enumerate() {
            if rest < f.tokens.len() {
                return Some((fi, rest));
            }
            rest -= f.tokens.len();
        }
        None
    }

    pub fn token(&self, pos: usize) -> Option<&str> {
        self.locate(pos)
            .map(|(f, o)| self.fields[f].tokens[o].as_str())
    }

    /// Copy with the token at `pos` replaced.
    ///
    /// Panics if `pos` is out of range.
    pub fn with_replaced(&self, pos: usize, token: &str) -> Instance {
        let mut out = self.clone();
        out.replace_in_place(pos, token);
        out
    }

    pub fn replace_in_place(&mut self, pos: usize, token: &str) {
        let (f, o) = self.locate(pos).expect("position out of range");
        let slot = &mut self.fields[f].tokens[o];
        slot.clear();
        slot.push_str(token);
    }

    /// Copy with every flattened position in `positions` deleted at once.
    /// Positions refer to `self`, so the order of `positions` is irrelevant.
    pub fn with_deleted(&self, positions: &[usize]) -> Instance {
        let mut out = self.clone();
        let mut flat = 0;
        for (src, dst) in self.fields.iter().zip(out.fields.iter_mut()) {
            dst.tokens = src
                .tokens
                .iter()
                .enumerate()
                .filter(|(i, _)| !positions.contains(&(flat + i)))
                .map(|(_, t)| t.clone())
                .collect();
            flat += src.tokens.len();
        }
        out
    }

    /// Copy where every position outside `keep` is replaced by [`PAD`].
    pub fn pad_except(&self, keep: &[usize]) -> Instance {
        let mut out = self.clone();
        for pos in 0..self.len() {
            if !keep.contains(&pos) {
                out.replace_in_place(pos, PAD);
            }
        }
        out
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn field(&self, name: &str) -> Option<&Field> {
        self.fields.iter().find(|f| f.name == name)
    }
}

/// Returns a copy of `instance` with the named field's tokens removed.
/// Other fields are untouched; blanking is idempotent.
pub fn blank_field(instance: &Instance, field_name: &str) -> Result<Instance> {
    let idx = instance
        .field_index(field_name)
        .ok_or_else(|| Error::UnknownField(field_name.into()))?;
    let mut out = instance.clone();
    out.fields[idx].tokens.clear();
    Ok(out)
}
