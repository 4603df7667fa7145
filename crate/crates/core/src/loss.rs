//! Losses, confidence metrics, and the three risk evaluators.
//!
//! All losses are non-negative. Cross entropy uses the standard
//! `-sum(target * log softmax(logits / T))` form, with predicted
//! probabilities floored at 1e-12 inside the log so degenerate one-hot
//! targets paired with confident wrong predictions stay finite.
//! Temperature applies to the softmax only; targets are never
//! re-tempered.

use crate::data::{Dataset, LabelVec};
use crate::error::{CoreError, Result};
use crate::linear::LinearParams;
use crate::reduce::tree_sum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Floor applied to predicted probabilities inside logs.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    /// Multiclass cross entropy against a soft (or one-hot) target.
    CrossEntropySoft,
    /// Binary cross entropy `log(1 + exp(-margin))` in two-class vector
    /// form; the margin is the logit gap between the two classes.
    BinaryCrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub temperature: f64,
}

impl LossSpec {
    pub fn cross_entropy() -> Self {
        Self {
            kind: LossKind::CrossEntropySoft,
            temperature: 1.0,
        }
    }

    pub fn binary_cross_entropy() -> Self {
        Self {
            kind: LossKind::BinaryCrossEntropy,
            temperature: 1.0,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) {
            return Err(CoreError::NonPositiveTemperature(temperature));
        }
        self.temperature = temperature;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(CoreError::NonPositiveTemperature(self.temperature));
        }
        Ok(())
    }
}

/// Temperature-scaled softmax with max subtraction for stability.
pub fn softmax(logits: &[f64], temperature: f64) -> Result<LabelVec> {
    if !(temperature > 0.0) {
        return Err(CoreError::NonPositiveTemperature(temperature));
    }
    if logits.len() < 2 {
        return Err(CoreError::TooFewClasses(logits.len()));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(CoreError::NonFiniteLogits);
    }
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    LabelVec::soft(exps.into_iter().map(|e| e / total).collect())
}

/// Log-sum-exp of `values`, max-subtracted.
fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Cross entropy of `target` against `softmax(logits / T)`.
pub fn cross_entropy(target: &LabelVec, logits: &[f64], spec: &LossSpec) -> Result<f64> {
    spec.validate()?;
    if logits.len() != target.num_classes() {
        return Err(CoreError::LengthMismatch {
            expected: target.num_classes(),
            got: logits.len(),
        });
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(CoreError::NonFiniteLogits);
    }
    let scaled: Vec<f64> = logits.iter().map(|z| z / spec.temperature).collect();
    let lse = log_sum_exp(&scaled);
    let floor = LOG_FLOOR.ln();
    let loss = -target
        .probs()
        .iter()
        .zip(&scaled)
        .map(|(t, z)| t * (z - lse).max(floor))
        .sum::<f64>();
    Ok(loss.max(0.0))
}

/// Cross entropy where the prediction is already a probability vector.
///
/// This is the form used when comparing two model outputs (e.g. the
/// teacher's soft label against the student's prediction).
pub fn cross_entropy_probs(target: &LabelVec, predicted: &LabelVec) -> Result<f64> {
    if target.num_classes() != predicted.num_classes() {
        return Err(CoreError::LengthMismatch {
            expected: target.num_classes(),
            got: predicted.num_classes(),
        });
    }
    Ok(-target
        .probs()
        .iter()
        .zip(predicted.probs())
        .map(|(t, p)| t * p.max(LOG_FLOOR).ln())
        .sum::<f64>())
}

/// Numerically stable `log(1 + exp(v))`.
fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

/// Binary cross entropy in two-class vector form.
///
/// For a one-hot target at class `k` this is `log(1 + exp(-m_k / T))`
/// with `m_k = z_k - z_{1-k}`; soft targets mix the two class terms.
pub fn binary_cross_entropy(target: &LabelVec, logits: &[f64], spec: &LossSpec) -> Result<f64> {
    spec.validate()?;
    if target.num_classes() != 2 || logits.len() != 2 {
        return Err(CoreError::LengthMismatch {
            expected: 2,
            got: logits.len().max(target.num_classes()),
        });
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(CoreError::NonFiniteLogits);
    }
    let margin = (logits[0] - logits[1]) / spec.temperature;
    let t = target.probs();
    Ok(t[0] * softplus(-margin) + t[1] * softplus(margin))
}

/// Loss dispatch on [`LossKind`].
pub fn loss_value(target: &LabelVec, logits: &[f64], spec: &LossSpec) -> Result<f64> {
    match spec.kind {
        LossKind::CrossEntropySoft => cross_entropy(target, logits, spec),
        LossKind::BinaryCrossEntropy => binary_cross_entropy(target, logits, spec),
    }
}

/// Gap between the two largest predicted probabilities; 1 is most
/// confident, 0 a tie.
pub fn margin_score(pred: &LabelVec) -> f64 {
    let mut top = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &p in pred.probs() {
        if p > top {
            second = top;
            top = p;
        } else if p > second {
            second = p;
        }
    }
    top - second
}

/// Shannon entropy of the prediction (nats), with `0 ln 0 = 0`.
/// Lower values mean higher confidence.
pub fn entropy_confidence(pred: &LabelVec) -> f64 {
    -pred
        .probs()
        .iter()
        .map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 })
        .sum::<f64>()
}

fn per_example_losses(model: &LinearParams, data: &Dataset, spec: &LossSpec) -> Result<Vec<f64>> {
    data.examples()
        .par_iter()
        .map(|ex| loss_value(&ex.label, &model.logits(&ex.features), spec))
        .collect()
}

/// Mean loss over the dataset. Deterministic: per-example losses are
/// reduced with a fixed pairwise tree.
pub fn empirical_risk(model: &LinearParams, data: &Dataset, spec: &LossSpec) -> Result<f64> {
    data.require_labels()?;
    let losses = per_example_losses(model, data, spec)?;
    Ok(tree_sum(&losses) / losses.len() as f64)
}

/// `(1/n) * sum_i w_i * loss_i`. Weights must already lie in `[0, 1]`;
/// projecting them there is the estimator's job.
pub fn weighted_empirical_risk(
    model: &LinearParams,
    data: &Dataset,
    weights: &[f64],
    spec: &LossSpec,
) -> Result<f64> {
    data.require_labels()?;
    if weights.len() != data.len() {
        return Err(CoreError::LengthMismatch {
            expected: data.len(),
            got: weights.len(),
        });
    }
    if let Some(&w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(CoreError::WeightOutOfRange(w));
    }
    let losses = per_example_losses(model, data, spec)?;
    let weighted: Vec<f64> = losses.iter().zip(weights).map(|(l, w)| l * w).collect();
    Ok(tree_sum(&weighted) / weighted.len() as f64)
}
