use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rationale::SubsetSelection;

/// One synonym swap at a flattened position.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Substitution {
    pub position: usize,
    pub old: alloc::string::String,
    pub new: alloc::string::String,
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ranks = alloc::vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
///
/// When either vector has zero rank variance the result is 1.0 if both are
/// constant and 0.0 otherwise.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let var = |r: &[f64]| r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    let (va, vb) = (var(&ra), var(&rb));
    let const_a = va == 0.0;
    let const_b = vb == 0.0;
    if const_a || const_b {
        return Ok(if const_a && const_b { 1.0 } else { 0.0 });
    }
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - mean) * (y - mean)).sum();
    Ok((cov / libm::sqrt(va * vb)).clamp(-1.0, 1.0))
}

/// F1 overlap of two selections over same-length instances. A position
/// matches when it is selected in both and holds the same token, or holds a
/// listed substitution of the original token. Two empty selections score 1.
pub fn subset_f1(a: &SubsetSelection, b: &SubsetSelection, subs: &[Substitution]) -> f64 {
    let total = a.positions.len() + b.positions.len();
    if total == 0 {
        return 1.0;
    }
    let matched = a
        .positions
        .iter()
        .zip(&a.tokens)
        .filter(|(p, ta)| {
            b.positions.iter().zip(&b.tokens).any(|(q, tb)| {
                *p == q
                    && (ta == &tb
                        || subs.iter().any(|s| s.position == **p && s.old == **ta && s.new == *tb))
            })
        })
        .count();
    2.0 * matched as f64 / total as f64
}
