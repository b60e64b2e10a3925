use attraudit_core::corpus::{bundled_mini_sentiment, bundled_planted_key};
use attraudit_core::linear::{train_linear_classifier, LinearConfig};
use attraudit_core::model::accuracy;
use attraudit_core::rationale::{train_rationale_model, RationaleConfig};
use attraudit_core::Classifier;

#[test]
fn linear_model_accuracy_is_frozen() {
    let split = bundled_mini_sentiment();
    assert_eq!((split.train.len(), split.dev.len()), (1600, 400));
    let (m, report) = train_linear_classifier(&split.train, &split.dev, &LinearConfig::default()).unwrap();
    assert!(report.heldout_accuracy >= 0.80, "dev accuracy {}", report.heldout_accuracy);
    assert_eq!(report.heldout_accuracy, 0.9125);
    let (again, _) = train_linear_classifier(&split.train, &split.dev, &LinearConfig::default()).unwrap();
    assert_eq!(m.fingerprint(), again.fingerprint());
}

#[test]
fn rationale_model_at_full_ratio_is_the_linear_classifier() {
    let split = bundled_mini_sentiment();
    let config = RationaleConfig { ratio: 1.0, ..RationaleConfig::default() };
    let (r, _) = train_rationale_model(&split.train, &split.dev, &config).unwrap();
    let (l, _) = train_linear_classifier(&split.train, &split.dev, &config.linear).unwrap();
    assert_eq!(r.classifier().params(), l.params());
    for x in split.dev.iter().take(50) {
        assert_eq!(r.predict(x), l.predict(x));
    }
}

#[test]
fn sparse_rationales_stay_close_to_full_input() {
    let split = bundled_mini_sentiment();
    let acc = |ratio: f64| {
        let config = RationaleConfig { ratio, ..RationaleConfig::default() };
        let (m, _) = train_rationale_model(&split.train, &split.dev, &config).unwrap();
        accuracy(&m, &split.dev)
    };
    let full = acc(1.0);
    let sparse = acc(0.2);
    assert!(sparse >= full - 0.03, "ratio 0.2: {sparse}, ratio 1: {full}");
}

#[test]
fn extractor_finds_the_planted_key() {
    let split = bundled_planted_key();
    let (m, _) = train_rationale_model(&split.train, &split.dev, &RationaleConfig::default()).unwrap();
    let positives: Vec<_> = split.dev.iter().filter(|x| x.tokens().any(|t| t == "key")).collect();
    assert!(!positives.is_empty());
    let hits = positives.iter().filter(|x| m.select(x).tokens.iter().any(|t| t == "key")).count();
    assert!(hits as f64 >= 0.95 * positives.len() as f64, "{hits}/{}", positives.len());
}
