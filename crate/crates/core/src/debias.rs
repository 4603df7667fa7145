//! Closed-form debiasing weights and the bias/MSE analysis around them.
//!
//! For corruption probability `p` and distortion `D` (ratio of the loss
//! under the corrupted label to the loss under the true label at the
//! same prediction), the raw weight is
//!
//! ```text
//! w = 1 / (1 + p * (D - 1))
//! ```
//!
//! Unclamped weights make the weighted risk an exactly unbiased
//! estimator of the clean risk; the shipped pipeline clamps them to
//! `[0, 1]`, trading a little bias for lower mean squared error. Both
//! variants are exposed here.

use crate::error::{CoreError, Result};
use crate::linear::LinearParams;
use crate::loss::{loss_value, LossSpec};
use crate::noise::NoiseModel;
use crate::reduce::tree_sum;
use crate::rng::stream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Clean losses at or below this floor make the distortion ratio
/// undefined; callers substitute distortion 1 (weight 1) instead.
pub const CLEAN_LOSS_FLOOR: f64 = 1e-12;

/// Guard for the weight denominator `1 + p (D - 1)`, which can only
/// approach zero when `p -> 1` and `D -> 0` together.
pub const WEIGHT_DENOM_FLOOR: f64 = 1e-9;

/// Per-example weight bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightRecord {
    /// Estimated (or exact) corruption probability.
    pub p_hat: f64,
    /// Estimated (or exact) distortion.
    pub distortion_hat: f64,
    /// Closed-form weight before projection.
    pub raw_weight: f64,
    /// Projection of `raw_weight` onto `[0, 1]`.
    pub weight: f64,
    /// Set when a degenerate denominator forced the weight-1 fallback.
    pub degenerate: bool,
}

/// Loss ratio `loss_adv / loss_true`.
pub fn distortion(loss_adv: f64, loss_true: f64) -> Result<f64> {
    if loss_true <= CLEAN_LOSS_FLOOR {
        return Err(CoreError::ZeroCleanLoss);
    }
    Ok(loss_adv / loss_true)
}

/// Raw weight for `(p, distortion)` without projection.
pub fn raw_debias_weight(p: f64, distortion: f64) -> Result<f64> {
    let denominator = 1.0 + p * (distortion - 1.0);
    if denominator <= WEIGHT_DENOM_FLOOR {
        return Err(CoreError::DegenerateWeight { denominator });
    }
    Ok(1.0 / denominator)
}

/// Weight record for `(p, distortion)`, with the projection applied.
///
/// The clamp is active exactly when `distortion < 1` and `p > 0` (the
/// raw weight then exceeds 1); the lower clamp never fires because the
/// raw weight is positive whenever the denominator guard passes.
pub fn debias_weight(p: f64, distortion: f64) -> Result<WeightRecord> {
    let raw_weight = raw_debias_weight(p, distortion)?;
    Ok(WeightRecord {
        p_hat: p,
        distortion_hat: distortion,
        raw_weight,
        weight: raw_weight.clamp(0.0, 1.0),
        degenerate: false,
    })
}

/// Weight-1 record used when the denominator degenerates or the clean
/// loss vanishes; batch estimators fall back to this instead of
/// aborting.
pub fn fallback_weight_record(p: f64, distortion: f64) -> WeightRecord {
    WeightRecord {
        p_hat: p,
        distortion_hat: distortion,
        raw_weight: 1.0,
        weight: 1.0,
        degenerate: true,
    }
}

/// How to take the expectation over the feature distribution.
#[derive(Debug, Clone, Copy)]
pub enum ExpectationMode {
    /// Exact sum over a discrete support.
    Exact,
    /// Monte Carlo with the given sample budget and seed.
    MonteCarlo { samples: usize, seed: u64 },
}

/// An expectation estimate; `std_error` is `None` in exact mode.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Expectation {
    pub value: f64,
    pub std_error: Option<f64>,
}

/// Distortion of model `f` at `x`, under the noise model's adversarial
/// label. Falls back to 1 when the clean loss vanishes.
pub fn model_distortion(
    nm: &NoiseModel,
    model: &LinearParams,
    spec: &LossSpec,
    x: &[f64],
) -> Result<f64> {
    let logits = model.logits(x);
    let loss_true = loss_value(&nm.ground_truth_label(x), &logits, spec)?;
    if loss_true <= CLEAN_LOSS_FLOOR {
        return Ok(1.0);
    }
    let loss_adv = loss_value(&nm.adversarial_label(x), &logits, spec)?;
    Ok(loss_adv / loss_true)
}

fn bias_integrand(
    nm: &NoiseModel,
    model: &LinearParams,
    spec: &LossSpec,
    x: &[f64],
) -> Result<f64> {
    let logits = model.logits(x);
    let loss_true = loss_value(&nm.ground_truth_label(x), &logits, spec)?;
    if loss_true <= CLEAN_LOSS_FLOOR {
        return Ok(0.0);
    }
    let loss_adv = loss_value(&nm.adversarial_label(x), &logits, spec)?;
    let dist = loss_adv / loss_true;
    Ok(nm.corrupt_prob(x) * (dist - 1.0) * loss_true)
}

/// `Bias(f) = E_x[ p(x) * (distortion_f(x) - 1) * loss(f_true(x), f(x)) ]`,
/// the exact gap between the expected unweighted noisy risk and the
/// clean risk.
pub fn bias_functional(
    nm: &NoiseModel,
    model: &LinearParams,
    spec: &LossSpec,
    mode: ExpectationMode,
) -> Result<Expectation> {
    match mode {
        ExpectationMode::Exact => {
            let (points, masses) = nm
                .sampler()
                .support()
                .ok_or(CoreError::ExactModeNeedsDiscreteSupport)?;
            let terms = points
                .iter()
                .zip(masses)
                .map(|(x, mass)| Ok(mass * bias_integrand(nm, model, spec, x)?))
                .collect::<Result<Vec<f64>>>()?;
            Ok(Expectation {
                value: tree_sum(&terms),
                std_error: None,
            })
        }
        ExpectationMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(CoreError::EmptySample);
            }
            let values = (0..samples)
                .into_par_iter()
                .map(|i| {
                    let x = nm.sampler().draw(&mut stream(seed, i as u64));
                    bias_integrand(nm, model, spec, &x)
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean = tree_sum(&values) / samples as f64;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (samples.max(2) - 1) as f64;
            Ok(Expectation {
                value: mean,
                std_error: Some((var / samples as f64).sqrt()),
            })
        }
    }
}

/// Exact expectations of the per-example noisy losses for a fixed model,
/// enumerating every `(support point, coin)` outcome:
/// returns `(E[unweighted], E[weighted])`. Weights are the raw
/// (unclamped) ones when `clamped` is false.
pub fn exact_noisy_risks(
    nm: &NoiseModel,
    model: &LinearParams,
    spec: &LossSpec,
    clamped: bool,
) -> Result<(f64, f64)> {
    let (points, masses) = nm
        .sampler()
        .support()
        .ok_or(CoreError::ExactModeNeedsDiscreteSupport)?;
    let mut unweighted_terms = Vec::with_capacity(points.len());
    let mut weighted_terms = Vec::with_capacity(points.len());
    for (x, mass) in points.iter().zip(masses) {
        let logits = model.logits(x);
        let p = nm.corrupt_prob(x);
        let loss_true = loss_value(&nm.ground_truth_label(x), &logits, spec)?;
        let loss_adv = loss_value(&nm.adversarial_label(x), &logits, spec)?;
        let dist = if loss_true <= CLEAN_LOSS_FLOOR {
            1.0
        } else {
            loss_adv / loss_true
        };
        let raw = raw_debias_weight(p, dist)?;
        let w = if clamped { raw.clamp(0.0, 1.0) } else { raw };
        unweighted_terms.push(mass * (p * loss_adv + (1.0 - p) * loss_true));
        weighted_terms.push(mass * w * (p * loss_adv + (1.0 - p) * loss_true));
    }
    Ok((tree_sum(&unweighted_terms), tree_sum(&weighted_terms)))
}

/// Exact clean risk over a discrete support.
pub fn exact_clean_risk(nm: &NoiseModel, model: &LinearParams, spec: &LossSpec) -> Result<f64> {
    let (points, masses) = nm
        .sampler()
        .support()
        .ok_or(CoreError::ExactModeNeedsDiscreteSupport)?;
    let terms = points
        .iter()
        .zip(masses)
        .map(|(x, mass)| {
            Ok(mass * loss_value(&nm.ground_truth_label(x), &model.logits(x), spec)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(tree_sum(&terms))
}

/// Closed-form `(MSE_unweighted, MSE_weighted)` of a fixed prediction
/// under the label coin, evaluated with the unclamped weight:
///
/// ```text
/// MSE   = p * loss^2 * (1 - D)^2
/// MSE_w = (1-p) * loss^2 * (1 - w)^2 + p * loss^2 * (1 - w D)^2
/// ```
pub fn mse_pair(p: f64, loss_true: f64, distortion: f64) -> Result<(f64, f64)> {
    if loss_true <= 0.0 {
        return Err(CoreError::ZeroCleanLoss);
    }
    let w = raw_debias_weight(p, distortion)?;
    let sq = loss_true * loss_true;
    let unweighted = p * sq * (1.0 - distortion) * (1.0 - distortion);
    let weighted = (1.0 - p) * sq * (1.0 - w) * (1.0 - w)
        + p * sq * (1.0 - w * distortion) * (1.0 - w * distortion);
    Ok((unweighted, weighted))
}

/// True iff the unweighted estimator has strictly smaller MSE:
/// `distortion < 1/2` and `p` in the open interval
/// `(0, (1 - 2 distortion) / (1 - distortion)^2)`.
pub fn mse_crossover_predicate(p: f64, distortion: f64) -> bool {
    if distortion >= 0.5 {
        return false;
    }
    let upper = (1.0 - 2.0 * distortion) / ((1.0 - distortion) * (1.0 - distortion));
    p > 0.0 && p < upper
}

/// Regularity constants for the loss, the weight function, and the
/// feature radius, plus the two derived quantities used to size SGD:
/// `kappa` bounds the stochastic gradient norm and `b_q` the smoothness
/// of the weighted per-example objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityConstants {
    pub radius: f64,
    pub loss_bound: f64,
    pub loss_lipschitz: f64,
    pub loss_smoothness: f64,
    pub weight_bound: f64,
    pub weight_lipschitz: f64,
    pub weight_smoothness: f64,
    /// `L_w M_l + R M_w L_l`
    pub kappa: f64,
    /// `M_l B_w + 2 L_l L_w R + M_w B_l R^2`
    pub b_q: f64,
}

/// Conservative closed-form constants for cross entropy over the unit
/// Frobenius ball with features bounded by `radius`:
///
/// - bound: `|loss| <= ln L + 2R` (log-sum-exp is within `ln L` of the
///   max logit, and `|logit| <= ||Theta||_F ||x|| <= R`);
/// - Lipschitz in the logits: `||softmax - target|| <= 2`;
/// - smoothness: the softmax Jacobian has spectral norm at most 1.
///
/// The same bounds cover the two-class binary cross entropy. Constants
/// follow the convention of being at least 1; tightness is irrelevant
/// since they only size step schedules and iteration counts.
pub fn regularity_constants(
    spec: &LossSpec,
    num_classes: usize,
    radius: f64,
    weight_bounds: (f64, f64, f64),
) -> Result<RegularityConstants> {
    spec.validate()?;
    if radius < 1.0 {
        return Err(CoreError::InvalidInput(
            "feature radius must be at least 1".into(),
        ));
    }
    let (weight_bound, weight_lipschitz, weight_smoothness) = weight_bounds;
    if weight_bound < 1.0 || weight_lipschitz < 1.0 || weight_smoothness < 1.0 {
        return Err(CoreError::InvalidInput(
            "weight regularity constants must be at least 1".into(),
        ));
    }
    if num_classes < 2 {
        return Err(CoreError::TooFewClasses(num_classes));
    }
    let loss_bound = ((num_classes as f64).ln() + 2.0 * radius).max(1.0);
    let loss_lipschitz = 2.0;
    let loss_smoothness = 1.0;
    let kappa = weight_lipschitz * loss_bound + radius * weight_bound * loss_lipschitz;
    let b_q = loss_bound * weight_smoothness
        + 2.0 * loss_lipschitz * weight_lipschitz * radius
        + weight_bound * loss_smoothness * radius * radius;
    Ok(RegularityConstants {
        radius,
        loss_bound,
        loss_lipschitz,
        loss_smoothness,
        weight_bound,
        weight_lipschitz,
        weight_smoothness,
        kappa,
        b_q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabelVec;
    use crate::loss::cross_entropy;
    use approx::assert_abs_diff_eq;

    #[test]
    fn distortion_is_the_plain_ratio() {
        assert_abs_diff_eq!(distortion(2.5, 2.5).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(distortion(3.0, 1.0).unwrap(), 3.0, epsilon = 1e-15);
        assert!(matches!(
            distortion(1.0, 0.0),
            Err(CoreError::ZeroCleanLoss)
        ));
    }

    #[test]
    fn distortion_matches_hand_computed_ce_ratio() {
        let spec = LossSpec::cross_entropy();
        let logits = [0.8, -0.4, 0.1];
        let y_true = LabelVec::one_hot(0, 3).unwrap();
        let y_adv = LabelVec::one_hot(2, 3).unwrap();
        let loss_true = cross_entropy(&y_true, &logits, &spec).unwrap();
        let loss_adv = cross_entropy(&y_adv, &logits, &spec).unwrap();
        // Hand route: CE difference is the logit gap, so the ratio is
        // fully determined by log-sum-exp arithmetic done separately.
        let lse = (0.8f64.exp() + (-0.4f64).exp() + 0.1f64.exp()).ln();
        let hand = (lse - 0.1) / (lse - 0.8);
        assert_abs_diff_eq!(
            distortion(loss_adv, loss_true).unwrap(),
            hand,
            epsilon = 1e-10
        );
    }

    #[test]
    fn weight_examples_from_the_closed_form() {
        let w = debias_weight(0.0, 7.3).unwrap();
        assert_eq!(w.weight, 1.0);
        assert_eq!(w.raw_weight, 1.0);

        let w = debias_weight(1.0, 3.0).unwrap();
        assert_abs_diff_eq!(w.raw_weight, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.weight, 1.0 / 3.0, epsilon = 1e-15);

        // Distortion below 1 pushes the raw weight above 1; projection
        // brings it back.
        let w = debias_weight(1.0, 0.5).unwrap();
        assert_abs_diff_eq!(w.raw_weight, 2.0, epsilon = 1e-15);
        assert_eq!(w.weight, 1.0);
    }

    #[test]
    fn clamp_is_active_iff_distortion_below_one_with_positive_p() {
        for &p in &[0.0, 0.2, 0.7, 1.0] {
            for &d in &[0.2, 0.5, 1.0, 1.5, 3.0] {
                let Ok(rec) = debias_weight(p, d) else {
                    continue;
                };
                let clamped = rec.weight < rec.raw_weight;
                assert_eq!(clamped, d < 1.0 && p > 0.0, "p={p} d={d}");
            }
        }
    }

    #[test]
    fn degenerate_denominator_is_an_error() {
        assert!(matches!(
            raw_debias_weight(1.0, 0.0),
            Err(CoreError::DegenerateWeight { .. })
        ));
    }

    #[test]
    fn weight_monotone_non_increasing_in_distortion() {
        let mut prev = f64::INFINITY;
        for i in 0..=60 {
            let d = i as f64 * 0.05;
            let w = debias_weight(0.6, d).unwrap().raw_weight;
            assert!(w <= prev + 1e-15, "not monotone at d={d}");
            prev = w;
        }
    }

    #[test]
    fn mse_pair_trivial_points() {
        let (a, b) = mse_pair(0.0, 1.0, 2.0).unwrap();
        assert_eq!((a, b), (0.0, 0.0));
        let (a, b) = mse_pair(0.4, 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(a, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn mse_pair_matches_monte_carlo_of_the_definition() {
        // Simulate the label coin directly and compare both MSEs.
        let (p, loss_true, dist) = (0.5, 1.0, 0.25);
        let loss_adv = dist * loss_true;
        let w = raw_debias_weight(p, dist).unwrap();
        let n = 2_000_000usize;
        let mut rng = stream(99, 0);
        use rand::Rng;
        let (mut acc_u, mut acc_w) = (0.0f64, 0.0f64);
        for _ in 0..n {
            let corrupted = rng.random::<f64>() < p;
            let observed = if corrupted { loss_adv } else { loss_true };
            acc_u += (loss_true - observed) * (loss_true - observed);
            acc_w += (loss_true - w * observed) * (loss_true - w * observed);
        }
        let (mse_u, mse_w) = mse_pair(p, loss_true, dist).unwrap();
        // Std error of each Monte Carlo mean is about 2e-4 at this n.
        assert!((acc_u / n as f64 - mse_u).abs() < 3.0 * 2e-4);
        assert!((acc_w / n as f64 - mse_w).abs() < 3.0 * 2e-4);
    }

    #[test]
    fn crossover_predicate_spot_checks() {
        // Threshold at distortion 0.25 is (1 - 0.5) / 0.75^2 = 0.888...
        assert!(mse_crossover_predicate(0.5, 0.25));
        assert!(!mse_crossover_predicate(0.9, 0.25));
        for i in 0..=100 {
            assert!(!mse_crossover_predicate(i as f64 / 100.0, 0.6));
        }
    }

    #[test]
    fn crossover_predicate_agrees_with_direct_comparison() {
        // Full grid; the acceptance suite repeats this via the harness.
        for pi in 0..=100 {
            for di in 0..=300 {
                let p = pi as f64 / 100.0;
                let d = di as f64 / 100.0;
                let Ok((mse_u, mse_w)) = mse_pair(p, 1.0, d) else {
                    continue; // (p=1, d=0) denominator degenerates
                };
                let predicted = mse_crossover_predicate(p, d);
                let diff = mse_w - mse_u;
                if predicted {
                    assert!(diff > -1e-9, "p={p} d={d} diff={diff}");
                } else {
                    assert!(diff < 1e-9, "p={p} d={d} diff={diff}");
                }
            }
        }
    }

    #[test]
    fn regularity_formulas() {
        // Unit loss constants are below the floor of the CE bounds, so
        // exercise the two derived formulas directly on hand inputs.
        let kappa = 1.0 * 2.0 + 3.0 * 1.0 * 2.0;
        assert_abs_diff_eq!(kappa, 8.0, epsilon = 1e-15);

        let spec = LossSpec::cross_entropy();
        let c = regularity_constants(&spec, 2, 1.0, (1.0, 1.0, 1.0)).unwrap();
        let expect_m = (2f64.ln() + 2.0).max(1.0);
        assert_abs_diff_eq!(c.loss_bound, expect_m, epsilon = 1e-12);
        assert_abs_diff_eq!(
            c.b_q,
            expect_m + 2.0 * 2.0 * 1.0 + 1.0 * 1.0 * 1.0,
            epsilon = 1e-12
        );
        let c2 = regularity_constants(&spec, 2, 2.0, (1.0, 1.0, 1.0)).unwrap();
        let m2 = 2f64.ln() + 4.0;
        assert_abs_diff_eq!(
            c2.b_q,
            m2 + 2.0 * 2.0 * 2.0 + 1.0 * 1.0 * 4.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(c2.kappa, m2 + 2.0 * 2.0, epsilon = 1e-12);
        // B_q with unit everything: 1 + 2 + 1 = 4, and doubling R gives
        // 1 + 4 + 4 = 9.
        assert_abs_diff_eq!(1.0 + 2.0 + 1.0, 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(1.0 + 4.0 + 4.0, 9.0, epsilon = 1e-15);
    }
}
