//! Token-level attribution methods.
//!
//! Every method scores the flattened token sequence of an instance with
//! respect to the model's predicted class `ŷ` on the unmodified input.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infill::InfillModel;
use crate::model::Classifier;
use crate::text::{Instance, PAD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Leave-one-out deletion.
    Loo,
    /// Margin of each token alone, everything else padded.
    Pad,
    /// Marginalization over infill replacements.
    Marg,
    /// Hierarchical span splitting; word-level scores are the leaf margins.
    Hedge,
    /// Analytic gradient × presence, linear models only.
    GradInput,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Loo,
        Method::Pad,
        Method::Marg,
        Method::Hedge,
        Method::GradInput,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Loo => "loo",
            Method::Pad => "pad",
            Method::Marg => "marg",
            Method::Hedge => "hedge",
            Method::GradInput => "grad_input",
        }
    }

    pub fn needs_infill(self) -> bool {
        self == Method::Marg
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown attribution method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub id: String,
    pub method: Method,
    /// Predicted class on the unmodified instance.
    pub class: usize,
    pub model_fingerprint: String,
    pub scores: Vec<f64>,
    /// Edge-case markers such as `pad_fallback:0` or `unigram_fallback:3`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// A node of the HEDGE span tree over `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanNode {
    pub start: usize,
    pub end: usize,
    /// Margin of the span alone, all other positions padded.
    pub score: f64,
    /// Additivity gap at the chosen split; `None` for leaves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction: Option<f64>,
    pub children: Vec<SpanNode>,
}

impl SpanNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&SpanNode> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a SpanNode>) {
        if self.is_leaf() {
            out.push(self);
        } else {
            for c in &self.children {
                c.collect_leaves(out);
            }
        }
    }
}

fn start<M: Classifier + ?Sized>(model: &M, x: &Instance) -> Result<(usize, f64)> {
    if x.is_empty() {
        return Err(Error::EmptyInstance(x.id.clone()));
    }
    let p = model.predict(x);
    let class = p.argmax();
    Ok((class, p.get(class)))
}

fn result<M: Classifier + ?Sized>(
    model: &M,
    x: &Instance,
    method: Method,
    class: usize,
    scores: Vec<f64>,
    flags: Vec<String>,
) -> AttributionResult {
    AttributionResult {
        id: x.id.clone(),
        method,
        class,
        model_fingerprint: model.fingerprint(),
        scores,
        flags,
    }
}

/// Copy of `x` without position `pos`; when that would leave no tokens the
/// position is padded instead and `true` is returned.
pub(crate) fn delete_one(x: &Instance, pos: usize) -> (Instance, bool) {
    if x.len() <= 1 {
        (x.with_replaced(pos, PAD), true)
    } else {
        (x.with_deleted(&[pos]), false)
    }
}

/// `score_i = p(ŷ|x) − p(ŷ|x without token i)`.
pub fn attribute_loo<M: Classifier + ?Sized>(model: &M, x: &Instance) -> Result<AttributionResult> {
    let (class, base) = start(model, x)?;
    let mut flags = Vec::new();
    let scores = (0..x.len())
        .map(|i| {
            let (reduced, padded) = delete_one(x, i);
            if padded {
                flags.push(format!("pad_fallback:{i}"));
            }
            base - model.predict(&reduced).get(class)
        })
        .collect();
    Ok(result(model, x, Method::Loo, class, scores, flags))
}

/// `score_i = margin(x with every position but i padded)`.
pub fn attribute_pad_occlusion<M: Classifier + ?Sized>(
    model: &M,
    x: &Instance,
) -> Result<AttributionResult> {
    let (class, _) = start(model, x)?;
    let scores = (0..x.len())
        .map(|i| model.predict(&x.pad_except(&[i])).margin(class))
        .collect();
    Ok(result(model, x, Method::Pad, class, scores, Vec::new()))
}

/// `score_i = p(ŷ|x) − Σ_w q(w|context_i) · p(ŷ|x with token i → w)`.
pub fn attribute_marg<M: Classifier + ?Sized>(
    model: &M,
    x: &Instance,
    infill: &InfillModel,
) -> Result<AttributionResult> {
    let (class, base) = start(model, x)?;
    let mut flags = Vec::new();
    let mut scores = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let cands = infill.candidates(x, i);
        if cands.fallback {
            flags.push(format!("unigram_fallback:{i}"));
        }
        let expected = if cands.words.is_empty() {
            flags.push(format!("pad_fallback:{i}"));
            model.predict(&x.with_replaced(i, PAD)).get(class)
        } else {
            let mut replaced = x.clone();
            cands
                .words
                .iter()
                .map(|(w, q)| {
                    replaced.replace_in_place(i, w);
                    q * model.predict(&replaced).get(class)
                })
                .sum()
        };
        scores.push(base - expected);
    }
    Ok(result(model, x, Method::Marg, class, scores, flags))
}

struct SpanMargins<'a, M: ?Sized> {
    model: &'a M,
    x: &'a Instance,
    class: usize,
    cache: BTreeMap<(usize, usize), f64>,
}

impl<M: Classifier + ?Sized> SpanMargins<'_, M> {
    fn margin(&mut self, start: usize, end: usize) -> f64 {
        if let Some(&m) = self.cache.get(&(start, end)) {
            return m;
        }
        let keep: Vec<usize> = (start..end).collect();
        let m = self.model.predict(&self.x.pad_except(&keep)).margin(self.class);
        self.cache.insert((start, end), m);
        m
    }

    /// `|margin(l ∪ r) − margin(l) − margin(r)|` for the split of
    /// `[start, end)` at `k`.
    fn interaction(&mut self, start: usize, k: usize, end: usize) -> f64 {
        let whole = self.margin(start, end);
        libm::fabs(whole - self.margin(start, k) - self.margin(k, end))
    }

    fn build(&mut self, start: usize, end: usize) -> SpanNode {
        let score = self.margin(start, end);
        if end - start < 2 {
            return SpanNode { start, end, score, interaction: None, children: Vec::new() };
        }
        let mut best = (start + 1, self.interaction(start, start + 1, end));
        for k in start + 2..end {
            let gap = self.interaction(start, k, end);
            if gap < best.1 {
                best = (k, gap);
            }
        }
        let (k, gap) = best;
        let left = self.build(start, k);
        let right = self.build(k, end);
        SpanNode {
            start,
            end,
            score,
            interaction: Some(gap),
            children: alloc::vec![left, right],
        }
    }
}

/// Top-down hierarchical explanation: each span of length ≥ 2 is split at the
/// point with the smallest additivity gap (earliest on ties) until single
/// tokens remain. Word-level scores are the leaf margins.
pub fn attribute_hedge<M: Classifier + ?Sized>(
    model: &M,
    x: &Instance,
) -> Result<(AttributionResult, SpanNode)> {
    let (class, _) = start(model, x)?;
    let mut spans = SpanMargins { model, x, class, cache: BTreeMap::new() };
    let tree = spans.build(0, x.len());
    let scores = tree.leaves().iter().map(|l| l.score).collect();
    Ok((result(model, x, Method::Hedge, class, scores, Vec::new()), tree))
}

/// `score_i = ∂p(ŷ|x)/∂presence_i`, from the model's analytic logit gradients
/// through the softmax.
pub fn attribute_grad_input<M: Classifier + ?Sized>(
    model: &M,
    x: &Instance,
) -> Result<AttributionResult> {
    let (class, _) = start(model, x)?;
    let grads = model
        .logit_gradients(x)
        .ok_or_else(|| Error::UnsupportedMethod(Method::GradInput.name().into()))?;
    let p = model.predict(x);
    let py = p.get(class);
    let scores = grads
        .per_token
        .iter()
        .map(|g| {
            let mean: f64 = p.as_slice().iter().zip(g).map(|(pc, gc)| pc * gc).sum();
            py * (g[class] - mean)
        })
        .collect();
    Ok(result(model, x, Method::GradInput, class, scores, Vec::new()))
}

/// Dispatches to the named method. `infill` is required for [`Method::Marg`].
pub fn attribute<M: Classifier + ?Sized>(
    method: Method,
    model: &M,
    x: &Instance,
    infill: Option<&InfillModel>,
) -> Result<AttributionResult> {
    match method {
        Method::Loo => attribute_loo(model, x),
        Method::Pad => attribute_pad_occlusion(model, x),
        Method::Marg => {
            let infill = infill
                .ok_or_else(|| Error::Config("method `marg` needs an infill model".into()))?;
            attribute_marg(model, x, infill)
        }
        Method::Hedge => attribute_hedge(model, x).map(|(r, _)| r),
        Method::GradInput => attribute_grad_input(model, x),
    }
}
