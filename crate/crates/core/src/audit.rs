//! Field-ablation audit and heat-map bucketing.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::text::{blank_field, Instance};

pub const HISTOGRAM_BINS: usize = 20;
pub const HISTOGRAM_WIDTH: f64 = 0.1;

/// Bin index for a confidence decrease in `[-1, 1]`. Bins are half-open
/// `[-1 + 0.1·k, -1 + 0.1·(k+1))`, the last one closed at 1.
pub fn histogram_bin(delta: f64) -> usize {
    let k = libm::floor((delta + 1.0) / HISTOGRAM_WIDTH + 1e-9);
    if k < 0.0 {
        0
    } else {
        (k as usize).min(HISTOGRAM_BINS - 1)
    }
}

/// Lower edge of bin `k`.
pub fn bin_lower_edge(k: usize) -> f64 {
    -1.0 + HISTOGRAM_WIDTH * k as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRecord {
    pub id: String,
    pub gold: usize,
    pub old_label: usize,
    pub new_label: usize,
    /// `p_old(ŷ) − p_blanked(ŷ)` for the original prediction `ŷ`.
    pub delta_confidence: f64,
}

impl AblationRecord {
    pub fn unchanged(&self) -> bool {
        self.old_label == self.new_label
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationAuditReport {
    pub field: String,
    pub total: usize,
    pub unchanged_fraction: f64,
    /// Among instances the model originally got right; `None` if there are none.
    pub unchanged_fraction_correct: Option<f64>,
    pub unchanged_fraction_incorrect: Option<f64>,
    /// Counts of confidence decrease over unchanged instances, 0.1-wide bins on `[-1, 1]`.
    pub histogram: Vec<usize>,
    pub records: Vec<AblationRecord>,
}

impl AblationAuditReport {
    pub fn unchanged_count(&self) -> usize {
        self.records.iter().filter(|r| r.unchanged()).count()
    }

    /// Share of unchanged instances whose confidence dropped by less than `t`.
    pub fn small_decrease_fraction(&self, t: f64) -> f64 {
        let unchanged: Vec<_> = self.records.iter().filter(|r| r.unchanged()).collect();
        if unchanged.is_empty() {
            return 0.0;
        }
        unchanged.iter().filter(|r| r.delta_confidence < t).count() as f64 / unchanged.len() as f64
    }
}

fn fraction(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Blanks `field` in every instance and measures how often the prediction
/// survives.
pub fn field_ablation_audit<M: Classifier + ?Sized>(
    model: &M,
    dataset: &[Instance],
    field: &str,
) -> Result<AblationAuditReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut records = Vec::with_capacity(dataset.len());
    for x in dataset {
        let blanked = blank_field(x, field)?;
        let p_old = model.predict(x);
        let p_new = model.predict(&blanked);
        let old_label = p_old.argmax();
        records.push(AblationRecord {
            id: x.id.clone(),
            gold: x.label,
            old_label,
            new_label: p_new.argmax(),
            delta_confidence: p_old.get(old_label) - p_new.get(old_label),
        });
    }
    let mut histogram = alloc::vec![0; HISTOGRAM_BINS];
    let (mut same, mut right, mut right_same, mut wrong_same) = (0, 0, 0, 0);
    for r in &records {
        let correct = r.old_label == r.gold;
        right += correct as usize;
        if r.unchanged() {
            same += 1;
            histogram[histogram_bin(r.delta_confidence)] += 1;
            if correct {
                right_same += 1;
            } else {
                wrong_same += 1;
            }
        }
    }
    Ok(AblationAuditReport {
        field: field.into(),
        total: records.len(),
        unchanged_fraction: same as f64 / records.len() as f64,
        unchanged_fraction_correct: fraction(right_same, right),
        unchanged_fraction_incorrect: fraction(wrong_same, records.len() - right),
        histogram,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    VeryNegative,
    Negative,
    Neutral,
    Positive,
    VeryPositive,
}

impl Bucket {
    pub const ALL: [Bucket; 5] = [
        Bucket::VeryNegative,
        Bucket::Negative,
        Bucket::Neutral,
        Bucket::Positive,
        Bucket::VeryPositive,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Bucket::VeryNegative => "Very Negative",
            Bucket::Negative => "Negative",
            Bucket::Neutral => "Neutral",
            Bucket::Positive => "Positive",
            Bucket::VeryPositive => "Very Positive",
        }
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Thresholds used for bucketing: medians of positive scores and of the
/// magnitudes of negative scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketThresholds {
    pub negative: Option<f64>,
    pub positive: Option<f64>,
}

/// Zero is neutral; each sign class splits at its own median magnitude, with
/// strictly larger magnitudes in the outer bucket.
pub fn bucket_scores(scores: &[f64]) -> (Vec<Bucket>, BucketThresholds) {
    let thresholds = BucketThresholds {
        negative: median(scores.iter().filter(|s| **s < 0.0).map(|s| -s).collect()),
        positive: median(scores.iter().copied().filter(|s| *s > 0.0).collect()),
    };
    let buckets = scores
        .iter()
        .map(|&s| {
            if s > 0.0 {
                if s > thresholds.positive.unwrap_or(f64::INFINITY) {
                    Bucket::VeryPositive
                } else {
                    Bucket::Positive
                }
            } else if s < 0.0 {
                if -s > thresholds.negative.unwrap_or(f64::INFINITY) {
                    Bucket::VeryNegative
                } else {
                    Bucket::Negative
                }
            } else {
                Bucket::Neutral
            }
        })
        .collect();
    (buckets, thresholds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatToken {
    pub token: String,
    pub score: f64,
    pub bucket: Bucket,
}

/// Bucketed tokens of one attribution, ready to render.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatMapDoc {
    pub id: String,
    pub method: String,
    pub tokens: Vec<HeatToken>,
    pub thresholds: BucketThresholds,
}

pub fn heat_map(x: &Instance, method: &str, scores: &[f64]) -> Result<HeatMapDoc> {
    if scores.len() != x.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: scores.len() });
    }
    let (buckets, thresholds) = bucket_scores(scores);
    let tokens = x
        .tokens()
        .zip(scores)
        .zip(buckets)
        .map(|((t, &score), bucket)| HeatToken { token: t.into(), score, bucket })
        .collect();
    Ok(HeatMapDoc { id: x.id.clone(), method: method.into(), tokens, thresholds })
}

/// Descriptive agreement between top-ranked tokens and a word-tag set: the
/// share of the `k` highest-scoring positions whose token is tagged. Not a
/// faithfulness measure.
pub fn tag_agreement(x: &Instance, scores: &[f64], tagged: &BTreeMap<String, bool>, k: usize) -> f64 {
    let top = crate::perturb::rank_features(scores, k.min(x.len()));
    if top.is_empty() {
        return 0.0;
    }
    let hits = top
        .iter()
        .filter(|&&p| x.token(p).is_some_and(|t| tagged.get(t).copied().unwrap_or(false)))
        .count();
    hits as f64 / top.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::LinearBuilder;
    use crate::text::{tokenize, Field};
    use alloc::vec;

    #[test]
    fn bucket_example() {
        let (b, _) = bucket_scores(&[-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert_eq!(
            b,
            vec![Bucket::VeryNegative, Bucket::Negative, Bucket::Neutral, Bucket::Positive, Bucket::VeryPositive]
        );
        let (z, _) = bucket_scores(&[0.0; 4]);
        assert!(z.iter().all(|b| *b == Bucket::Neutral));
    }

    #[test]
    fn bins_cover_range() {
        assert_eq!(histogram_bin(-1.0), 0);
        assert_eq!(histogram_bin(0.0), 10);
        assert_eq!(histogram_bin(0.0999), 10);
        assert_eq!(histogram_bin(0.1), 11);
        assert_eq!(histogram_bin(1.0), 19);
        assert_eq!(histogram_bin(-0.05), 9);
    }

    fn pair(id: &str, doc: &str, q: &str, label: usize) -> Instance {
        Instance {
            id: id.into(),
            fields: vec![Field::new("document", tokenize(doc)), Field::new("question", tokenize(q))],
            label,
        }
    }

    #[test]
    fn independent_field_is_unchanged() {
        let m = LinearBuilder::new(2).unigram(0, "yes", &[0.0, 3.0]).unigram(0, "no", &[3.0, 0.0]).build().unwrap();
        let data = [pair("a", "yes it is", "is it", 1), pair("b", "no way", "why", 1)];
        let r = field_ablation_audit(&m, &data, "question").unwrap();
        assert_eq!(r.unchanged_fraction, 1.0);
        assert!(r.records.iter().all(|x| x.delta_confidence == 0.0));
        assert_eq!(r.histogram.iter().sum::<usize>(), 2);
        assert_eq!(r.unchanged_fraction_correct, Some(1.0));
        assert_eq!(r.unchanged_fraction_incorrect, Some(1.0));
        assert!(field_ablation_audit(&m, &data, "missing").is_err());
    }
}
