//! Estimating `(p, distortion)` from a validation set.
//!
//! Each validation example contributes a 2-D covariate
//! `(teacher confidence, student confidence)` and a 2-D response: `(0, 1)`
//! when the teacher's top class matches the label, else
//! `(1, loss(teacher, student) / loss(label, student))`. Unlabeled
//! queries are answered by averaging the responses of the `k` nearest
//! covariates in Euclidean distance, with `k = ceil(sqrt(|V|) / 2)`.
//!
//! Confidence coordinates: the margin score is used raw in `[0, 1]`;
//! the entropy metric is negated so that larger always means more
//! confident. Both coordinates of a covariate come from the same metric.

use crate::data::LabelVec;
use crate::debias::{debias_weight, fallback_weight_record, WeightRecord, CLEAN_LOSS_FLOOR};
use crate::error::{CoreError, Result};
use crate::loss::{cross_entropy_probs, entropy_confidence, margin_score, LossSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConfidenceMetric {
    Margin,
    Entropy,
}

impl ConfidenceMetric {
    pub fn name(self) -> &'static str {
        match self {
            ConfidenceMetric::Margin => "margin",
            ConfidenceMetric::Entropy => "entropy",
        }
    }
}

/// Confidence coordinate of a prediction under the chosen metric.
pub fn confidence(pred: &LabelVec, metric: ConfidenceMetric) -> f64 {
    match metric {
        ConfidenceMetric::Margin => margin_score(pred),
        ConfidenceMetric::Entropy => -entropy_confidence(pred),
    }
}

/// Number of neighbors for a validation set of the given size.
pub fn neighbor_count(validation_size: usize) -> usize {
    ((validation_size as f64).sqrt() / 2.0).ceil() as usize
}

/// k-NN regression structure over the 2-D confidence plane.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationIndex {
    points: Vec<[f64; 2]>,
    responses: Vec<[f64; 2]>,
    k: usize,
    metric: ConfidenceMetric,
    degenerate_count: usize,
}

impl ValidationIndex {
    /// Assemble an index from precomputed covariates and responses.
    /// Responses must have a `{0, 1}` first coordinate.
    pub fn from_parts(
        points: Vec<[f64; 2]>,
        responses: Vec<[f64; 2]>,
        metric: ConfidenceMetric,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(CoreError::EmptyDataset);
        }
        if points.len() != responses.len() {
            return Err(CoreError::LengthMismatch {
                expected: points.len(),
                got: responses.len(),
            });
        }
        for r in &responses {
            if r[0] != 0.0 && r[0] != 1.0 {
                return Err(CoreError::InvalidInput(format!(
                    "response p must be 0 or 1, got {}",
                    r[0]
                )));
            }
        }
        let k = neighbor_count(points.len());
        Ok(Self {
            points,
            responses,
            k,
            metric,
            degenerate_count: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn metric(&self) -> ConfidenceMetric {
        self.metric
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn responses(&self) -> &[[f64; 2]] {
        &self.responses
    }

    /// How many validation examples hit the zero-clean-loss fallback
    /// while building responses.
    pub fn degenerate_count(&self) -> usize {
        self.degenerate_count
    }

    /// Mean response of the `k` nearest covariates. Exact linear scan;
    /// distance ties break toward the lower validation index.
    pub fn query(&self, point: [f64; 2]) -> (f64, f64) {
        let mut order: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let dx = q[0] - point[0];
                let dy = q[1] - point[1];
                (dx * dx + dy * dy, i)
            })
            .collect();
        order.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        let k = self.k.min(order.len());
        let mut p_sum = 0.0;
        let mut d_sum = 0.0;
        for &(_, idx) in order.iter().take(k) {
            p_sum += self.responses[idx][0];
            d_sum += self.responses[idx][1];
        }
        (p_sum / k as f64, d_sum / k as f64)
    }
}

/// Build the validation index from model predictions on the validation
/// set. All prediction lists are probability vectors; the distortion
/// response compares the student's prediction against the teacher's
/// output and against the true label.
pub fn build_validation_index(
    teacher_preds: &[LabelVec],
    student_preds: &[LabelVec],
    true_labels: &[LabelVec],
    spec: &LossSpec,
    metric: ConfidenceMetric,
) -> Result<ValidationIndex> {
    build_validation_index_with_labels(
        teacher_preds,
        teacher_preds,
        student_preds,
        true_labels,
        spec,
        metric,
    )
}

/// As [`build_validation_index`], but with the teacher's assigned
/// labels passed separately from its predictive distributions.
///
/// Under hard distillation the loss being reweighted is taken against
/// the teacher's one-hot labels, so the distortion response must use
/// those; the confidence covariate still needs the soft prediction (a
/// one-hot margin is identically 1). Under soft distillation the two
/// coincide and [`build_validation_index`] is the same thing.
pub fn build_validation_index_with_labels(
    teacher_preds: &[LabelVec],
    teacher_labels: &[LabelVec],
    student_preds: &[LabelVec],
    true_labels: &[LabelVec],
    spec: &LossSpec,
    metric: ConfidenceMetric,
) -> Result<ValidationIndex> {
    spec.validate()?;
    if teacher_preds.len() != student_preds.len()
        || teacher_preds.len() != true_labels.len()
        || teacher_preds.len() != teacher_labels.len()
    {
        return Err(CoreError::LengthMismatch {
            expected: teacher_preds.len(),
            got: student_preds.len().min(true_labels.len()),
        });
    }
    if teacher_preds.len() < 4 {
        return Err(CoreError::InvalidInput(
            "validation set needs at least 4 examples".into(),
        ));
    }
    let mut points = Vec::with_capacity(teacher_preds.len());
    let mut responses = Vec::with_capacity(teacher_preds.len());
    let mut degenerate_count = 0usize;
    for (((teacher, assigned), student), label) in teacher_preds
        .iter()
        .zip(teacher_labels)
        .zip(student_preds)
        .zip(true_labels)
    {
        points.push([confidence(teacher, metric), confidence(student, metric)]);
        if assigned.top_class() == label.top_class() {
            responses.push([0.0, 1.0]);
        } else {
            let loss_teacher = cross_entropy_probs(assigned, student)?;
            let loss_true = cross_entropy_probs(label, student)?;
            let dist = if loss_true <= CLEAN_LOSS_FLOOR {
                degenerate_count += 1;
                1.0
            } else {
                loss_teacher / loss_true
            };
            responses.push([1.0, dist]);
        }
    }
    let mut index = ValidationIndex::from_parts(points, responses, metric)?;
    index.degenerate_count = degenerate_count;
    Ok(index)
}

/// `(p_hat, distortion_hat)` for one query pair of predictions.
pub fn knn_estimate(
    index: &ValidationIndex,
    query_teacher_pred: &LabelVec,
    query_student_pred: &LabelVec,
) -> (f64, f64) {
    index.query([
        confidence(query_teacher_pred, index.metric()),
        confidence(query_student_pred, index.metric()),
    ])
}

/// Estimated, projected weights for a batch of unlabeled examples.
/// Output order matches input order. A degenerate denominator never
/// aborts the batch; the affected example falls back to weight 1 with
/// its record flagged.
pub fn estimate_weights(
    index: &ValidationIndex,
    teacher_preds: &[LabelVec],
    student_preds: &[LabelVec],
) -> Result<Vec<WeightRecord>> {
    if teacher_preds.len() != student_preds.len() {
        return Err(CoreError::LengthMismatch {
            expected: teacher_preds.len(),
            got: student_preds.len(),
        });
    }
    Ok(teacher_preds
        .par_iter()
        .zip(student_preds)
        .map(|(t, s)| {
            let (p_hat, d_hat) = knn_estimate(index, t, s);
            debias_weight(p_hat, d_hat).unwrap_or_else(|_| fallback_weight_record(p_hat, d_hat))
        })
        .collect())
}

/// Entropy-based exponential weights of the teacher alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FidelityWeights {
    /// Mean prediction entropy over all training examples.
    pub mean_entropy: f64,
    /// `exp(-entropy(x) / mean_entropy)`, each in `(0, 1]`.
    pub weights: Vec<f64>,
    /// Set when every prediction was one-hot (zero mean entropy); the
    /// weights are then all 1.
    pub degenerate: bool,
}

/// Fidelity weighting baseline: down-weight examples where the teacher
/// is uncertain. Composes with the debiasing weights by elementwise
/// product.
pub fn fidelity_weights(teacher_preds: &[LabelVec]) -> Result<FidelityWeights> {
    if teacher_preds.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    let entropies: Vec<f64> = teacher_preds.iter().map(entropy_confidence).collect();
    let mean_entropy = entropies.iter().sum::<f64>() / entropies.len() as f64;
    if mean_entropy <= 0.0 {
        return Ok(FidelityWeights {
            mean_entropy,
            weights: vec![1.0; teacher_preds.len()],
            degenerate: true,
        });
    }
    Ok(FidelityWeights {
        mean_entropy,
        weights: entropies
            .iter()
            .map(|e| (-e / mean_entropy).exp())
            .collect(),
        degenerate: false,
    })
}
