mod common;

use attraudit_core::attack::{average_ranks, spearman, subset_f1, Substitution};
use attraudit_core::attribution::{attribute, attribute_hedge, attribute_loo, attribute_pad_occlusion, Method, SpanNode};
use attraudit_core::audit::{bucket_scores, histogram_bin, Bucket, HISTOGRAM_BINS};
use attraudit_core::infill::build_infill_model;
use attraudit_core::linear::LinearClassifier;
use attraudit_core::perturb::{
    aopc_with_budget, budget, curve_with_budget, rank_features, AopcMode, ModificationStrategy,
};
use attraudit_core::rationale::{RationaleModel, SubsetSelection};
use attraudit_core::{Classifier, Instance};
use common::{any_instance, instance, random_model, words, VOCAB};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn predictions_are_probability_vectors(seed in any::<u64>(), classes in 2usize..=4, x in any_instance(64)) {
        let m = random_model(seed, classes);
        let p = m.predict(&x);
        prop_assert_eq!(p.len(), classes);
        prop_assert!(p.as_slice().iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn attribution_is_deterministic(seed in any::<u64>(), x in any_instance(16)) {
        let m = random_model(seed, 3);
        for method in [Method::Loo, Method::Pad, Method::Hedge, Method::GradInput] {
            let a = attribute(method, &m, &x, None).unwrap();
            let b = attribute(method, &m, &x, None).unwrap();
            prop_assert_eq!(a.scores.len(), x.len());
            let bits = |s: &[f64]| s.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a.scores), bits(&b.scores));
        }
    }

    #[test]
    fn grad_input_matches_finite_differences(seed in any::<u64>(), classes in 2usize..=3, x in any_instance(24)) {
        let m = random_model(seed, classes);
        let g = attribute(Method::GradInput, &m, &x, None).unwrap();
        let class = g.class;
        let h = 1e-5;
        for i in 0..x.len() {
            let mut up = vec![1.0; x.len()];
            let mut down = vec![1.0; x.len()];
            up[i] += h;
            down[i] -= h;
            let fd = (m.predict_with_presence(&x, &up).get(class) - m.predict_with_presence(&x, &down).get(class)) / (2.0 * h);
            prop_assert!((fd - g.scores[i]).abs() <= 1e-6, "position {i}: analytic {} numeric {fd}", g.scores[i]);
        }
    }

    #[test]
    fn infill_distributions_are_normalized(corpus in prop::collection::vec(words(10), 1..20), x in instance(10), order in 1usize..=2, cap in 1usize..=8) {
        let data: Vec<Instance> = corpus.into_iter().map(|t| Instance::single("c", t, 0)).collect();
        let infill = build_infill_model(&data, order, cap).unwrap();
        for pos in 0..x.len() {
            let c = infill.candidates(&x, pos);
            let original = x.token(pos).unwrap();
            prop_assert!(c.words.len() <= cap);
            prop_assert!(c.words.iter().all(|(w, p)| w != original && w != attraudit_core::PAD && *p > 0.0));
            if !c.words.is_empty() {
                prop_assert!((c.words.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() <= 1e-12);
            }
            prop_assert!(c.words.windows(2).all(|w| w[0].1 >= w[1].1));
        }
    }

    #[test]
    fn rationale_subset_size_law(seed in any::<u64>(), ratio in 0.05f64..=1.0, x in any_instance(40)) {
        let extractor = VOCAB.iter().enumerate().map(|(i, t)| (t.to_string(), ((seed >> (i % 60)) & 7) as f64)).collect();
        let m = RationaleModel::from_parts(ratio, extractor, random_model(seed, 2)).unwrap();
        let sel = m.select(&x);
        let expected = ((ratio * x.len() as f64 + 1e-9).floor() as usize).max(1).min(x.len());
        prop_assert_eq!(sel.positions.len(), expected);
        prop_assert_eq!(m.subset_size(x.len()), expected);
        prop_assert!(sel.positions.windows(2).all(|w| w[0] < w[1]));
        let masked = m.masked_view(&x);
        let kept = masked.tokens().filter(|t| *t != attraudit_core::PAD).count();
        prop_assert_eq!(kept, expected);
    }

    #[test]
    fn rationale_gradients_are_zero_off_the_selection(seed in any::<u64>(), ratio in 0.1f64..=1.0, x in any_instance(20)) {
        let extractor = VOCAB.iter().enumerate().map(|(i, t)| (t.to_string(), ((seed >> (i % 60)) & 7) as f64)).collect();
        let m = RationaleModel::from_parts(ratio, extractor, random_model(seed, 2)).unwrap();
        let g = attribute(Method::GradInput, &m, &x, None).unwrap();
        let sel = m.select(&x);
        let view = m.masked_view(&x);
        let h = 1e-5;
        for i in 0..x.len() {
            if !sel.positions.contains(&i) {
                prop_assert_eq!(g.scores[i], 0.0);
                continue;
            }
            let mut up = vec![1.0; x.len()];
            let mut down = vec![1.0; x.len()];
            up[i] += h;
            down[i] -= h;
            let c = m.classifier();
            let fd = (c.predict_with_presence(&view, &up).get(g.class) - c.predict_with_presence(&view, &down).get(g.class)) / (2.0 * h);
            prop_assert!((fd - g.scores[i]).abs() <= 1e-6);
        }
    }

    #[test]
    fn hedge_splits_are_minimal(seed in any::<u64>(), x in any_instance(8)) {
        let m = random_model(seed, 2);
        let (attr, tree) = attribute_hedge(&m, &x).unwrap();
        let class = m.predict(&x).argmax();
        let margin = |a: usize, b: usize| {
            let keep: Vec<usize> = (a..b).collect();
            m.predict(&x.pad_except(&keep)).margin(class)
        };
        fn check(node: &SpanNode, margin: &dyn Fn(usize, usize) -> f64) -> Result<(), TestCaseError> {
            prop_assert_eq!(node.score.to_bits(), margin(node.start, node.end).to_bits());
            if node.end - node.start < 2 {
                prop_assert!(node.is_leaf());
                return Ok(());
            }
            prop_assert_eq!(node.children.len(), 2);
            let k = node.children[0].end;
            prop_assert_eq!(node.children[0].start, node.start);
            prop_assert_eq!(node.children[1].start, k);
            prop_assert_eq!(node.children[1].end, node.end);
            let whole = margin(node.start, node.end);
            let gaps: Vec<f64> = (node.start + 1..node.end)
                .map(|s| (whole - margin(node.start, s) - margin(s, node.end)).abs())
                .collect();
            let min = gaps.iter().copied().fold(f64::INFINITY, f64::min);
            let first = node.start + 1 + gaps.iter().position(|g| *g == min).unwrap();
            prop_assert_eq!(k, first);
            prop_assert_eq!(node.interaction.unwrap().to_bits(), min.to_bits());
            for c in &node.children {
                check(c, margin)?;
            }
            Ok(())
        }
        check(&tree, &margin)?;
        let leaves: Vec<(usize, usize)> = tree.leaves().iter().map(|l| (l.start, l.end)).collect();
        prop_assert_eq!(leaves, (0..x.len()).map(|i| (i, i + 1)).collect::<Vec<_>>());
        let pad = attribute_pad_occlusion(&m, &x).unwrap();
        prop_assert_eq!(attr.scores, pad.scores);
    }

    #[test]
    fn metrics_only_depend_on_the_ranking(seed in any::<u64>(), x in any_instance(20), grid in prop::collection::vec(-40i32..40, 20), ratio in 0.05f64..=1.0, step in any::<bool>()) {
        let m = random_model(seed, 2);
        let scores: Vec<f64> = grid[..x.len()].iter().map(|v| *v as f64 / 8.0).collect();
        let moved: Vec<f64> = scores.iter().map(|s| 3.0 * s + 1.0).collect();
        let infill = build_infill_model(&[x.clone()], 2, 5).unwrap();
        let mode = if step { AopcMode::StepAveraged } else { AopcMode::SingleStep };
        let k = budget(x.len(), ratio);
        for s in [ModificationStrategy::del(), ModificationStrategy::pad(), ModificationStrategy::rep(&infill)] {
            let a = aopc_with_budget(&m, &x, &scores, &s, k, mode).unwrap();
            let b = aopc_with_budget(&m, &x, &moved, &s, k, mode).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
            let ca = curve_with_budget(&m, &x, &scores, &s, k, "").unwrap().area();
            let cb = curve_with_budget(&m, &x, &moved, &s, k, "").unwrap().area();
            prop_assert_eq!(ca.to_bits(), cb.to_bits());
        }
    }

    #[test]
    fn rank_features_matches_brute_force(scores in prop::collection::vec(prop_oneof![(-5i32..5).prop_map(|v| v as f64), -1.0f64..1.0], 0..30), k in 0usize..35) {
        let got = rank_features(&scores, k);
        // Position i precedes j iff its score is larger, or equal and i < j.
        let before = |i: usize, j: usize| scores[i] > scores[j] || (scores[i] == scores[j] && i < j);
        let mut expected: Vec<usize> = (0..scores.len())
            .map(|i| (i, (0..scores.len()).filter(|&j| j != i && before(j, i)).count()))
            .filter(|&(_, r)| r < k)
            .map(|(i, _)| i)
            .collect();
        expected.sort_by_key(|&i| (0..scores.len()).filter(|&j| j != i && before(j, i)).count());
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn buckets_are_scale_invariant(scores in prop::collection::vec((-60i32..60).prop_map(|v| v as f64 / 16.0), 1..40), e in -3i32..=3) {
        let c = 2f64.powi(e);
        let scaled: Vec<f64> = scores.iter().map(|s| s * c).collect();
        let (a, _) = bucket_scores(&scores);
        let (b, _) = bucket_scores(&scaled);
        prop_assert_eq!(&a, &b);
        for (s, bucket) in scores.iter().zip(&a) {
            prop_assert_eq!(*s == 0.0, *bucket == Bucket::Neutral);
            prop_assert_eq!(*s > 0.0, matches!(bucket, Bucket::Positive | Bucket::VeryPositive));
        }
    }

    #[test]
    fn histogram_bins_cover_their_range(delta in -1.0f64..=1.0) {
        let k = histogram_bin(delta);
        prop_assert!(k < HISTOGRAM_BINS);
        let lo = -1.0 + 0.1 * k as f64;
        prop_assert!(delta >= lo - 1e-9);
        prop_assert!(delta < lo + 0.1 + 1e-9 || k == HISTOGRAM_BINS - 1);
    }

    #[test]
    fn subset_f1_is_symmetric(len in 1usize..15, a in prop::collection::btree_set(0usize..15, 0..8), b in prop::collection::btree_set(0usize..15, 0..8), swaps in prop::collection::btree_set(0usize..15, 0..5)) {
        let original: Vec<String> = (0..len).map(|i| format!("w{i}")).collect();
        let adversarial: Vec<String> = (0..len).map(|i| if swaps.contains(&i) { format!("s{i}") } else { format!("w{i}") }).collect();
        let sel = |set: &std::collections::BTreeSet<usize>, toks: &[String]| {
            let positions: Vec<usize> = set.iter().copied().filter(|&p| p < len).collect();
            SubsetSelection { id: "x".into(), tokens: positions.iter().map(|&p| toks[p].clone()).collect(), positions }
        };
        let sa = sel(&a, &original);
        let sb = sel(&b, &adversarial);
        let forward: Vec<Substitution> = swaps.iter().filter(|&&p| p < len).map(|&p| Substitution { position: p, old: original[p].clone(), new: adversarial[p].clone() }).collect();
        let backward: Vec<Substitution> = forward.iter().map(|s| Substitution { position: s.position, old: s.new.clone(), new: s.old.clone() }).collect();
        let f = subset_f1(&sa, &sb, &forward);
        prop_assert_eq!(f, subset_f1(&sb, &sa, &backward));
        prop_assert!((0.0..=1.0).contains(&f));
        // With synonym identity the score equals F1 of the position sets.
        let inter = sa.positions.iter().filter(|p| sb.positions.contains(p)).count();
        let total = sa.positions.len() + sb.positions.len();
        let expected = if total == 0 { 1.0 } else { 2.0 * inter as f64 / total as f64 };
        prop_assert!((f - expected).abs() <= 1e-12);
    }

    #[test]
    fn spearman_is_bounded_and_symmetric(a in prop::collection::vec(-3i32..3, 2..20), b in prop::collection::vec(-3i32..3, 2..20)) {
        let n = a.len().min(b.len());
        let a: Vec<f64> = a[..n].iter().map(|v| *v as f64).collect();
        let b: Vec<f64> = b[..n].iter().map(|v| *v as f64).collect();
        let r = spearman(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&r));
        prop_assert_eq!(r, spearman(&b, &a).unwrap());
        let ranks = average_ranks(&a);
        prop_assert!((ranks.iter().sum::<f64>() - (n * (n + 1)) as f64 / 2.0).abs() < 1e-9);
    }
}

#[test]
fn spearman_reference_values() {
    assert!((spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[5.0, 6.0, 7.0, 8.0, 7.0]).unwrap() - 8.0 / 95f64.sqrt()).abs() < 1e-12);
    assert!((spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 5.0]).unwrap() - 0.8).abs() < 1e-12);
    assert!((spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap() - 0.8660254037844387).abs() < 1e-12);
    assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
}

#[test]
fn loo_on_a_hand_built_model_has_closed_form() {
    // Single unigram weights: deleting token i removes exactly w_i from the logit gap.
    let m: LinearClassifier = attraudit_core::linear::LinearBuilder::new(2)
        .unigram(0, "good", &[0.0, 1.5])
        .unigram(0, "bad", &[0.0, -2.0])
        .build()
        .unwrap();
    let x = Instance::from_text("x", "good good bad", 1);
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let loo = attribute_loo(&m, &x).unwrap();
    let p = sig(1.0);
    assert_eq!(loo.class, 1);
    assert!((loo.scores[0] - (p - sig(-0.5))).abs() < 1e-12);
    assert!((loo.scores[2] - (p - sig(3.0))).abs() < 1e-12);
}
