//! Property tests for the core invariants.

use proptest::prelude::*;
use wdistill_core::data::{Dataset, Example, LabelVec, Split};
use wdistill_core::debias::debias_weight;
use wdistill_core::estimator::{neighbor_count, ValidationIndex};
use wdistill_core::loss::{
    cross_entropy, empirical_risk, entropy_confidence, margin_score, softmax,
    weighted_empirical_risk, LossSpec,
};
use wdistill_core::LinearParams;

fn label_strategy(classes: usize) -> impl Strategy<Value = LabelVec> {
    prop::collection::vec(1e-6..1.0f64, classes).prop_map(|raw| {
        let sum: f64 = raw.iter().sum();
        LabelVec::soft(raw.into_iter().map(|v| v / sum).collect()).unwrap()
    })
}

proptest! {
    // Softmax stays a valid distribution even for logits of magnitude 1e4.
    #[test]
    fn softmax_output_is_a_valid_label(
        logits in prop::collection::vec(-1e4..1e4f64, 2..6),
        temperature in 0.05..10.0f64,
    ) {
        let out = softmax(&logits, temperature).unwrap();
        let sum: f64 = out.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-9);
        prop_assert!(out.probs().iter().all(|p| *p >= 0.0));
    }

    // Gibbs: cross entropy is at least the target's own entropy.
    #[test]
    fn cross_entropy_dominates_target_entropy(
        target in label_strategy(4),
        logits in prop::collection::vec(-30.0..30.0f64, 4),
    ) {
        let spec = LossSpec::cross_entropy();
        let ce = cross_entropy(&target, &logits, &spec).unwrap();
        prop_assert!(ce >= entropy_confidence(&target) - 1e-9);
    }

    // Confidence metrics ignore class order.
    #[test]
    fn confidence_metrics_are_permutation_invariant(
        target in label_strategy(5),
        rotation in 0usize..5,
    ) {
        let mut probs = target.probs().to_vec();
        probs.rotate_left(rotation);
        let rotated = LabelVec::soft(probs).unwrap();
        prop_assert!((margin_score(&target) - margin_score(&rotated)).abs() <= 1e-12);
        prop_assert!(
            (entropy_confidence(&target) - entropy_confidence(&rotated)).abs() <= 1e-9
        );
    }

    // Unit weights recover the unweighted risk exactly.
    #[test]
    fn unit_weights_match_empirical_risk(
        rows in prop::collection::vec(
            (prop::collection::vec(-3.0..3.0f64, 3), 0usize..3),
            1..20,
        ),
        theta_raw in prop::collection::vec(-1.0..1.0f64, 9),
    ) {
        let examples: Vec<Example> = rows
            .into_iter()
            .map(|(x, class)| {
                Example::new(x, LabelVec::one_hot(class, 3).unwrap()).unwrap()
            })
            .collect();
        let n = examples.len();
        let data = Dataset::new(examples, Split::Labeled, 0).unwrap();
        let theta = ndarray::Array2::from_shape_vec((3, 3), theta_raw).unwrap();
        let model = LinearParams::from_matrix(theta, 1.0).unwrap();
        let spec = LossSpec::cross_entropy();
        let plain = empirical_risk(&model, &data, &spec).unwrap();
        let weighted = weighted_empirical_risk(&model, &data, &vec![1.0; n], &spec).unwrap();
        prop_assert!((plain - weighted).abs() <= 1e-12);
    }

    // Clamp activation rule: weight < raw exactly when distortion < 1
    // and p > 0.
    #[test]
    fn clamp_activation_rule(p in 0.0..1.0f64, distortion in 0.0..4.0f64) {
        prop_assume!(1.0 + p * (distortion - 1.0) > 1e-6);
        let rec = debias_weight(p, distortion).unwrap();
        prop_assert_eq!(rec.weight < rec.raw_weight, distortion < 1.0 && p > 0.0);
        prop_assert!((0.0..=1.0).contains(&rec.weight));
    }

    // k = ceil(sqrt(|V|) / 2) over the whole size range used anywhere.
    #[test]
    fn neighbor_count_rule(size in 4usize..10_000) {
        let k = neighbor_count(size);
        prop_assert_eq!(k, ((size as f64).sqrt() / 2.0).ceil() as usize);
        prop_assert!(k >= 1 && k <= size);
    }

    // Query answers are means of k {0,1}-responses, hence p_hat is a
    // multiple of 1/k inside [0, 1]; permuting queries permutes answers.
    #[test]
    fn knn_outputs_are_structured(
        raw in prop::collection::vec(((0.0..1.0f64), (0.0..1.0f64), any::<bool>()), 4..64),
        queries in prop::collection::vec(((0.0..1.0f64), (0.0..1.0f64)), 1..12),
    ) {
        let points: Vec<[f64; 2]> = raw.iter().map(|(a, b, _)| [*a, *b]).collect();
        let responses: Vec<[f64; 2]> = raw
            .iter()
            .map(|(_, b, wrong)| if *wrong { [1.0, 1.0 + b] } else { [0.0, 1.0] })
            .collect();
        let index = ValidationIndex::from_parts(
            points,
            responses,
            wdistill_core::estimator::ConfidenceMetric::Margin,
        )
        .unwrap();
        let k = index.k() as f64;
        let answers: Vec<(f64, f64)> =
            queries.iter().map(|(a, b)| index.query([*a, *b])).collect();
        for (p_hat, _) in &answers {
            prop_assert!((0.0..=1.0).contains(p_hat));
            let scaled = p_hat * k;
            prop_assert!((scaled - scaled.round()).abs() <= 1e-9);
        }
        // Permutation equivariance.
        let mut rev = queries.clone();
        rev.reverse();
        let rev_answers: Vec<(f64, f64)> =
            rev.iter().map(|(a, b)| index.query([*a, *b])).collect();
        for (fwd, bwd) in answers.iter().zip(rev_answers.iter().rev()) {
            prop_assert_eq!(fwd, bwd);
        }
    }
}
