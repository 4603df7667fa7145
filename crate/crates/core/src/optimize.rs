//! Projected SGD on the reweighted objective.
//!
//! The per-example objective is `q(Theta) = w(Theta) * loss(y, Theta x)`.
//! Its gradient follows the product rule,
//!
//! ```text
//! grad q = loss * grad w + w * grad loss
//! ```
//!
//! where `grad loss = (dloss/dz) x^T`. Frozen and unit weights have
//! `grad w = 0`. The exact debiasing weight differentiates through the
//! distortion ratio by the chain rule; on the clamped region (weight
//! pinned at 1) the subgradient is taken to be 0.

use crate::data::{Dataset, LabelVec};
use crate::debias::{raw_debias_weight, CLEAN_LOSS_FLOOR};
use crate::error::{CoreError, Result};
use crate::linear::LinearParams;
use crate::loss::{empirical_risk, loss_value, LossKind, LossSpec};
use crate::noise::NoiseModel;
use crate::rng::{child_seed, stream};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Step size rule; `t` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepSchedule {
    /// `scale / sqrt(T)` at every step.
    Constant { scale: f64 },
    /// `scale / sqrt(t)`.
    InverseSqrt { scale: f64 },
}

impl StepSchedule {
    fn at(&self, t: usize, total: usize) -> f64 {
        match self {
            StepSchedule::Constant { scale } => scale / (total as f64).sqrt(),
            StepSchedule::InverseSqrt { scale } => scale / (t as f64).sqrt(),
        }
    }

    fn scale(&self) -> f64 {
        match self {
            StepSchedule::Constant { scale } | StepSchedule::InverseSqrt { scale } => *scale,
        }
    }
}

/// How multi-pass SGD picks its next example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingMode {
    /// Uniform with replacement, one index per step.
    WithReplacement,
    /// A fresh random permutation each epoch, walked in order.
    PermutationPerEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub iterations: usize,
    pub step: StepSchedule,
    pub constraint_radius: f64,
    pub seed: u64,
    pub sampling: SamplingMode,
    /// Emit a trajectory point every this many steps.
    pub log_every: Option<usize>,
}

impl SgdConfig {
    /// Constant schedule `radius / (kappa * sqrt(T))`, the default
    /// sizing from the regularity constants.
    pub fn with_kappa_step(iterations: usize, kappa: f64, constraint_radius: f64, seed: u64) -> Self {
        Self {
            iterations,
            step: StepSchedule::Constant {
                scale: constraint_radius / kappa,
            },
            constraint_radius,
            seed,
            sampling: SamplingMode::WithReplacement,
            log_every: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(CoreError::InvalidInput("iterations must be >= 1".into()));
        }
        if !(self.constraint_radius > 0.0) {
            return Err(CoreError::InvalidInput(
                "constraint radius must be positive".into(),
            ));
        }
        if !(self.step.scale() >= 0.0) {
            return Err(CoreError::InvalidInput("step scale must be >= 0".into()));
        }
        Ok(())
    }
}

/// Weight assignment for a whole SGD run.
#[derive(Clone)]
pub enum WeightFunction {
    /// Naive objective: every example weighs 1.
    Unit,
    /// Constants estimated once, e.g. by the k-NN estimator; one entry
    /// per dataset example, each in `[0, 1]`.
    Frozen(Vec<f64>),
    /// Closed-form weight recomputed at the current parameters from the
    /// noise model oracle; `clamped: false` is the exactly debiasing
    /// variant used by the theory experiments.
    ExactDebias { model: NoiseModel, clamped: bool },
}

/// Weight assignment for a single example.
#[derive(Clone)]
pub enum ExampleWeight<'a> {
    Unit,
    Frozen(f64),
    ExactDebias {
        model: &'a NoiseModel,
        clamped: bool,
    },
}

fn grad_loss_z(target: &LabelVec, logits: &[f64], spec: &LossSpec) -> Result<Vec<f64>> {
    match spec.kind {
        LossKind::CrossEntropySoft => {
            let probs = crate::loss::softmax(logits, spec.temperature)?;
            Ok(probs
                .probs()
                .iter()
                .zip(target.probs())
                .map(|(s, t)| (s - t) / spec.temperature)
                .collect())
        }
        LossKind::BinaryCrossEntropy => {
            if logits.len() != 2 || target.num_classes() != 2 {
                return Err(CoreError::LengthMismatch {
                    expected: 2,
                    got: logits.len().max(target.num_classes()),
                });
            }
            let margin = (logits[0] - logits[1]) / spec.temperature;
            let t = target.probs();
            let g0 = (-t[0] * sigmoid(-margin) + t[1] * sigmoid(margin)) / spec.temperature;
            Ok(vec![g0, -g0])
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn outer(grad_z: &[f64], features: &[f64]) -> Array2<f64> {
    let mut out = Array2::zeros((grad_z.len(), features.len()));
    for (i, g) in grad_z.iter().enumerate() {
        for (j, x) in features.iter().enumerate() {
            out[[i, j]] = g * x;
        }
    }
    out
}

/// Weight of one example at the current parameters, plus its gradient
/// when the weight depends on them.
fn example_weight_and_grad(
    params: &LinearParams,
    features: &[f64],
    wfn: &ExampleWeight,
    spec: &LossSpec,
    with_grad: bool,
) -> Result<(f64, Option<Array2<f64>>)> {
    match wfn {
        ExampleWeight::Unit => Ok((1.0, None)),
        ExampleWeight::Frozen(w) => {
            if !(0.0..=1.0).contains(w) {
                return Err(CoreError::WeightOutOfRange(*w));
            }
            Ok((*w, None))
        }
        ExampleWeight::ExactDebias { model, clamped } => {
            let logits = params.logits(features);
            let y_true = model.ground_truth_label(features);
            let y_adv = model.adversarial_label(features);
            let p = model.corrupt_prob(features);
            let loss_true = loss_value(&y_true, &logits, spec)?;
            if loss_true <= CLEAN_LOSS_FLOOR {
                // Student already perfect here; distortion defined as 1.
                return Ok((1.0, None));
            }
            let loss_adv = loss_value(&y_adv, &logits, spec)?;
            let dist = loss_adv / loss_true;
            let raw = raw_debias_weight(p, dist)?;
            if *clamped && raw >= 1.0 {
                // Clamped region: weight pinned at 1, subgradient 0.
                return Ok((1.0, None));
            }
            if !with_grad {
                return Ok((raw, None));
            }
            let grad_true = outer(&grad_loss_z(&y_true, &logits, spec)?, features);
            let grad_adv = outer(&grad_loss_z(&y_adv, &logits, spec)?, features);
            // d/dTheta of (loss_adv / loss_true), then of 1/denominator.
            let grad_dist =
                (&grad_adv * loss_true - &grad_true * loss_adv) / (loss_true * loss_true);
            let grad_w = grad_dist * (-raw * raw * p);
            Ok((raw, Some(grad_w)))
        }
    }
}

/// `w(Theta) * loss(label, Theta x)` — the scalar the gradient below
/// differentiates. Exposed so finite-difference checks can probe it.
pub fn weighted_loss_value(
    params: &LinearParams,
    features: &[f64],
    label: &LabelVec,
    wfn: &ExampleWeight,
    spec: &LossSpec,
) -> Result<f64> {
    let (w, _) = example_weight_and_grad(params, features, wfn, spec, false)?;
    Ok(w * loss_value(label, &params.logits(features), spec)?)
}

/// Product-rule gradient of the weighted per-example loss.
pub fn weighted_loss_gradient(
    params: &LinearParams,
    features: &[f64],
    label: &LabelVec,
    wfn: &ExampleWeight,
    spec: &LossSpec,
) -> Result<Array2<f64>> {
    let logits = params.logits(features);
    let (w, grad_w) = example_weight_and_grad(params, features, wfn, spec, true)?;
    let loss_observed = loss_value(label, &logits, spec)?;
    let mut grad = outer(&grad_loss_z(label, &logits, spec)?, features) * w;
    if let Some(gw) = grad_w {
        grad = grad + gw * loss_observed;
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::InvalidInput(format!(
            "non-finite gradient (weight {w}, loss {loss_observed})"
        )));
    }
    Ok(grad)
}

/// Radial projection onto the Frobenius ball of the parameter's own
/// constraint radius. Inside the ball the parameters pass through
/// untouched; outside they are rescaled, preserving direction.
pub fn project_frobenius(params: &LinearParams) -> LinearParams {
    let mut out = params.clone();
    project_in_place(&mut out);
    out
}

fn project_in_place(params: &mut LinearParams) {
    let norm = params.frobenius_norm();
    let radius = params.constraint_radius();
    if norm > radius {
        let scale = radius / norm;
        params.theta_mut().mapv_inplace(|v| v * scale);
    }
}

/// One logged point of an SGD run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub frobenius_norm: f64,
    pub train_loss: f64,
    pub heldout_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SinglePassRun {
    pub params: LinearParams,
    pub trajectory: Vec<TrajectoryPoint>,
}

#[derive(Debug, Clone)]
pub struct MultiPassRun {
    /// The full iterate list; the first entry is the initial point.
    pub iterates: Vec<LinearParams>,
    pub trajectory: Vec<TrajectoryPoint>,
}

/// Single-pass SGD: initialize at zero and take `T` projected steps,
/// each on one fresh sample from the noisy distribution. Step `t` draws
/// from stream `(seed, t)`, so paired runs over models sharing a
/// feature sampler see identical draws.
///
/// `train_loss` in the trajectory is the running mean of the per-step
/// weighted losses since the previous logged point.
pub fn sgd_single_pass(
    nm: &NoiseModel,
    wfn: &WeightFunction,
    cfg: &SgdConfig,
    spec: &LossSpec,
    heldout: Option<&Dataset>,
) -> Result<SinglePassRun> {
    cfg.validate()?;
    spec.validate()?;
    let example_weight = |_t: usize| -> Result<ExampleWeight> {
        match wfn {
            WeightFunction::Unit => Ok(ExampleWeight::Unit),
            WeightFunction::ExactDebias { model, clamped } => Ok(ExampleWeight::ExactDebias {
                model,
                clamped: *clamped,
            }),
            WeightFunction::Frozen(_) => Err(CoreError::InvalidInput(
                "frozen weights need a fixed dataset; use multi-pass SGD".into(),
            )),
        }
    };
    let mut params =
        LinearParams::zeros(nm.num_classes(), nm.dim()).with_radius(cfg.constraint_radius)?;
    let mut trajectory = Vec::new();
    let mut loss_acc = 0.0;
    let mut loss_count = 0usize;
    for t in 1..=cfg.iterations {
        let (x, label) = nm.draw_noisy(&mut stream(cfg.seed, t as u64));
        let wfn_t = example_weight(t)?;
        let grad = weighted_loss_gradient(&params, &x, &label, &wfn_t, spec)?;
        loss_acc += weighted_loss_value(&params, &x, &label, &wfn_t, spec)?;
        loss_count += 1;
        let eta = cfg.step.at(t, cfg.iterations);
        *params.theta_mut() -= &(grad * eta);
        project_in_place(&mut params);
        if let Some(every) = cfg.log_every {
            if every > 0 && t % every == 0 {
                let heldout_loss = heldout
                    .map(|d| empirical_risk(&params, d, spec))
                    .transpose()?;
                trajectory.push(TrajectoryPoint {
                    step: t,
                    frobenius_norm: params.frobenius_norm(),
                    train_loss: loss_acc / loss_count as f64,
                    heldout_loss,
                });
                loss_acc = 0.0;
                loss_count = 0;
            }
        }
    }
    Ok(SinglePassRun { params, trajectory })
}

const EPOCH_PHASE: u64 = 0x5057_4550; // stream tag for per-epoch shuffles

/// Multi-pass SGD over a fixed dataset: `T - 1` projected updates from
/// `init`, returning all `T` iterates (the initial point first).
///
/// With frozen weights the list length must match the dataset.
/// `train_loss` in the trajectory is the weighted empirical risk over
/// the whole dataset at the logged iterate.
pub fn sgd_multi_pass(
    data: &Dataset,
    wfn: &WeightFunction,
    cfg: &SgdConfig,
    spec: &LossSpec,
    init: &LinearParams,
    heldout: Option<&Dataset>,
) -> Result<MultiPassRun> {
    cfg.validate()?;
    spec.validate()?;
    data.require_labels()?;
    if let WeightFunction::Frozen(weights) = wfn {
        if weights.len() != data.len() {
            return Err(CoreError::LengthMismatch {
                expected: data.len(),
                got: weights.len(),
            });
        }
        if let Some(&w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(CoreError::WeightOutOfRange(w));
        }
    }
    if init.num_classes() != data.num_classes() || init.dim() != data.dim() {
        return Err(CoreError::LengthMismatch {
            expected: data.dim(),
            got: init.dim(),
        });
    }

    let n = data.len();
    let mut params = init.clone().with_radius(cfg.constraint_radius)?;
    let mut pick_rng = stream(cfg.seed, 0);
    let mut permutation: Vec<usize> = (0..n).collect();
    let mut iterates = Vec::with_capacity(cfg.iterations);
    iterates.push(params.clone());
    let mut trajectory = Vec::new();

    let log_point = |params: &LinearParams, step: usize| -> Result<TrajectoryPoint> {
        let train_loss = match wfn {
            WeightFunction::Unit => empirical_risk(params, data, spec)?,
            WeightFunction::Frozen(weights) => {
                crate::loss::weighted_empirical_risk(params, data, weights, spec)?
            }
            WeightFunction::ExactDebias { model, clamped } => {
                let per: Vec<f64> = data
                    .examples()
                    .iter()
                    .map(|ex| {
                        weighted_loss_value(
                            params,
                            &ex.features,
                            &ex.label,
                            &ExampleWeight::ExactDebias {
                                model,
                                clamped: *clamped,
                            },
                            spec,
                        )
                    })
                    .collect::<Result<Vec<f64>>>()?;
                crate::reduce::tree_mean(&per)
            }
        };
        Ok(TrajectoryPoint {
            step,
            frobenius_norm: params.frobenius_norm(),
            train_loss,
            heldout_loss: heldout.map(|d| empirical_risk(params, d, spec)).transpose()?,
        })
    };

    for t in 1..cfg.iterations {
        let idx = match cfg.sampling {
            SamplingMode::WithReplacement => pick_rng.random_range(0..n),
            SamplingMode::PermutationPerEpoch => {
                let pos = (t - 1) % n;
                if pos == 0 {
                    let epoch = (t - 1) / n;
                    let mut shuffle_rng =
                        stream(child_seed(cfg.seed, EPOCH_PHASE), epoch as u64);
                    permutation.shuffle(&mut shuffle_rng);
                }
                permutation[pos]
            }
        };
        let ex = &data.examples()[idx];
        let wfn_t = match wfn {
            WeightFunction::Unit => ExampleWeight::Unit,
            WeightFunction::Frozen(weights) => ExampleWeight::Frozen(weights[idx]),
            WeightFunction::ExactDebias { model, clamped } => ExampleWeight::ExactDebias {
                model,
                clamped: *clamped,
            },
        };
        let grad = weighted_loss_gradient(&params, &ex.features, &ex.label, &wfn_t, spec)?;
        let eta = cfg.step.at(t, cfg.iterations);
        *params.theta_mut() -= &(grad * eta);
        project_in_place(&mut params);
        iterates.push(params.clone());
        if let Some(every) = cfg.log_every {
            if every > 0 && t % every == 0 {
                trajectory.push(log_point(&params, t)?);
            }
        }
    }
    Ok(MultiPassRun {
        iterates,
        trajectory,
    })
}

/// Index and iterate minimizing the held-out empirical risk; ties
/// resolve to the earliest iterate.
pub fn best_iterate<'a>(
    iterates: &'a [LinearParams],
    heldout: &Dataset,
    spec: &LossSpec,
) -> Result<(usize, &'a LinearParams)> {
    if iterates.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    let mut best = 0usize;
    let mut best_risk = f64::INFINITY;
    for (i, params) in iterates.iter().enumerate() {
        let risk = empirical_risk(params, heldout, spec)?;
        if risk < best_risk {
            best_risk = risk;
            best = i;
        }
    }
    Ok((best, &iterates[best]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Example, Split};
    use crate::noise::{make_sphere_instance, FeatureSampler};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use std::sync::Arc;

    fn ce() -> LossSpec {
        LossSpec::cross_entropy()
    }

    #[test]
    fn unit_weight_gradient_is_plain_ce_gradient() {
        let params = LinearParams::from_matrix(array![[0.2, -0.1], [0.0, 0.3]], 1.0).unwrap();
        let x = [1.5, -0.5];
        let y = LabelVec::one_hot(1, 2).unwrap();
        let grad =
            weighted_loss_gradient(&params, &x, &y, &ExampleWeight::Unit, &ce()).unwrap();
        let probs = crate::loss::softmax(&params.logits(&x), 1.0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = (probs.probs()[i] - y.probs()[i]) * x[j];
                assert_abs_diff_eq!(grad[[i, j]], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn frozen_zero_weight_gives_zero_gradient() {
        let params = LinearParams::from_matrix(array![[0.2, -0.1], [0.0, 0.3]], 1.0).unwrap();
        let grad = weighted_loss_gradient(
            &params,
            &[1.0, 1.0],
            &LabelVec::one_hot(0, 2).unwrap(),
            &ExampleWeight::Frozen(0.0),
            &ce(),
        )
        .unwrap();
        assert!(grad.iter().all(|v| *v == 0.0));
    }

    /// Central finite differences of the weighted loss value.
    fn finite_difference(
        params: &LinearParams,
        x: &[f64],
        y: &LabelVec,
        wfn: &ExampleWeight,
        spec: &LossSpec,
    ) -> Array2<f64> {
        let h = 1e-5;
        let mut grad = Array2::zeros((params.num_classes(), params.dim()));
        for i in 0..params.num_classes() {
            for j in 0..params.dim() {
                let mut plus = params.clone();
                plus.theta_mut()[[i, j]] += h;
                let mut minus = params.clone();
                minus.theta_mut()[[i, j]] -= h;
                let fp = weighted_loss_value(&plus, x, y, wfn, spec).unwrap();
                let fm = weighted_loss_value(&minus, x, y, wfn, spec).unwrap();
                grad[[i, j]] = (fp - fm) / (2.0 * h);
            }
        }
        grad
    }

    fn relative_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let diff = (a - b).iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        diff / norm.max(1e-10)
    }

    #[test]
    fn gradients_match_finite_differences_in_every_mode() {
        let mut rng = stream(5, 0);
        let spec = ce();
        for trial in 0..25 {
            let l = 2 + (trial % 3);
            let d = 2 + (trial % 4);
            let mut theta = Array2::zeros((l, d));
            theta.mapv_inplace(|_: f64| rng.random::<f64>() - 0.5);
            let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
            theta.mapv_inplace(|v| 0.8 * v / norm.max(1e-9));
            let params = LinearParams::from_matrix(theta, 1.0).unwrap();
            let x: Vec<f64> = (0..d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let y = LabelVec::one_hot(trial % l, l).unwrap();

            for wfn in [ExampleWeight::Unit, ExampleWeight::Frozen(0.37)] {
                let analytic = weighted_loss_gradient(&params, &x, &y, &wfn, &spec).unwrap();
                let numeric = finite_difference(&params, &x, &y, &wfn, &spec);
                assert!(
                    relative_error(&analytic, &numeric) <= 1e-5,
                    "trial {trial}: relative error too large"
                );
            }
        }
    }

    #[test]
    fn exact_debias_gradient_matches_finite_differences() {
        let mut rng = stream(6, 0);
        let spec = ce();
        let mut done = 0;
        while done < 25 {
            let x: Vec<f64> = (0..3).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let p = 0.2 + 0.6 * rng.random::<f64>();
            let truth = (rng.random::<u64>() % 3) as usize;
            let adv = (truth + 1 + (rng.random::<u64>() % 2) as usize) % 3;
            let sampler = FeatureSampler::discrete(vec![x.clone()], vec![1.0]).unwrap();
            let model = NoiseModel::new(
                Arc::new(move |_: &[f64]| truth),
                Arc::new(move |_: &[f64]| p),
                Arc::new(move |_: &[f64]| LabelVec::one_hot(adv, 3).unwrap()),
                sampler,
                3,
            )
            .unwrap();
            let mut theta = Array2::zeros((3, 3));
            theta.mapv_inplace(|_: f64| rng.random::<f64>() - 0.5);
            let params = LinearParams::from_matrix(theta, 1.0).unwrap();
            let y = LabelVec::one_hot(adv, 3).unwrap();

            for clamped in [false, true] {
                let wfn = ExampleWeight::ExactDebias {
                    model: &model,
                    clamped,
                };
                // Keep a margin from the clamp kink.
                let (w, _) =
                    example_weight_and_grad(&params, &x, &wfn, &spec, false).unwrap();
                if (w - 1.0).abs() < 1e-3 {
                    continue;
                }
                let analytic = weighted_loss_gradient(&params, &x, &y, &wfn, &spec).unwrap();
                let numeric = finite_difference(&params, &x, &y, &wfn, &spec);
                assert!(
                    relative_error(&analytic, &numeric) <= 1e-5,
                    "clamped={clamped}: finite differences disagree"
                );
            }
            done += 1;
        }
    }

    #[test]
    fn stochastic_gradient_is_unbiased_for_the_clean_risk() {
        // Average the exact-debias (unclamped) gradient over every
        // (support point, coin) outcome and compare with the clean-risk
        // gradient.
        let points = vec![vec![1.0, 0.2], vec![-0.4, 0.9], vec![0.3, -0.8]];
        let masses = vec![0.5, 0.3, 0.2];
        let ps = [0.0, 0.45, 0.9];
        let truths = [0usize, 1, 2];
        let advs = [1usize, 2, 0];
        let sampler = FeatureSampler::discrete(points.clone(), masses.clone()).unwrap();
        let pts = points.clone();
        let class_of = move |x: &[f64]| -> usize {
            pts.iter()
                .position(|p| {
                    p.iter()
                        .zip(x)
                        .all(|(a, b)| a.to_bits() == b.to_bits())
                })
                .expect("support point")
        };
        let c1 = class_of.clone();
        let c2 = class_of.clone();
        let c3 = class_of;
        let model = NoiseModel::new(
            Arc::new(move |x: &[f64]| truths[c1(x)]),
            Arc::new(move |x: &[f64]| ps[c2(x)]),
            Arc::new(move |x: &[f64]| LabelVec::one_hot(advs[c3(x)], 3).unwrap()),
            sampler,
            3,
        )
        .unwrap();
        let spec = ce();
        let params = LinearParams::from_matrix(
            array![[0.3, -0.2], [0.1, 0.4], [-0.5, 0.2]],
            1.0,
        )
        .unwrap();

        let mut avg: Array2<f64> = Array2::zeros((3, 2));
        let mut clean: Array2<f64> = Array2::zeros((3, 2));
        let wfn = ExampleWeight::ExactDebias {
            model: &model,
            clamped: false,
        };
        for (i, x) in points.iter().enumerate() {
            let y_true = LabelVec::one_hot(truths[i], 3).unwrap();
            let y_adv = LabelVec::one_hot(advs[i], 3).unwrap();
            let g_adv = weighted_loss_gradient(&params, x, &y_adv, &wfn, &spec).unwrap();
            let g_clean_label = weighted_loss_gradient(&params, x, &y_true, &wfn, &spec).unwrap();
            avg = avg + g_adv * (masses[i] * ps[i]) + g_clean_label * (masses[i] * (1.0 - ps[i]));
            let g_true =
                weighted_loss_gradient(&params, x, &y_true, &ExampleWeight::Unit, &spec).unwrap();
            clean = clean + g_true * masses[i];
        }
        let max_diff = (&avg - &clean)
            .iter()
            .map(|v| v.abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff <= 1e-10, "gradient bias {max_diff}");
    }

    #[test]
    fn projection_examples() {
        let inside =
            LinearParams::from_matrix(array![[0.3, 0.0], [0.0, 0.4]], 1.0).unwrap();
        assert_eq!(project_frobenius(&inside), inside);

        let outside =
            LinearParams::from_matrix(array![[0.0, 4.0], [0.0, 0.0]], 1.0).unwrap();
        let projected = project_frobenius(&outside);
        assert_abs_diff_eq!(projected.frobenius_norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(projected.theta()[[0, 1]], 1.0, epsilon = 1e-12);
        assert_eq!(project_frobenius(&projected), projected);
    }

    fn sphere_cfg(iterations: usize, seed: u64) -> SgdConfig {
        SgdConfig {
            iterations,
            step: StepSchedule::Constant { scale: 0.02 },
            constraint_radius: 1.0,
            seed,
            sampling: SamplingMode::WithReplacement,
            log_every: None,
        }
    }

    #[test]
    fn single_step_with_zero_rate_returns_zero() {
        let (_, nm) = make_sphere_instance(4, 0.3, 1).unwrap();
        let cfg = SgdConfig {
            iterations: 1,
            step: StepSchedule::Constant { scale: 0.0 },
            constraint_radius: 1.0,
            seed: 0,
            sampling: SamplingMode::WithReplacement,
            log_every: None,
        };
        let run =
            sgd_single_pass(&nm, &WeightFunction::Unit, &cfg, &LossSpec::binary_cross_entropy(), None)
                .unwrap();
        assert!(run.params.theta().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_noise_single_pass_matches_clean_twin_bitwise() {
        let (_, nm) = make_sphere_instance(5, 0.4, 3).unwrap();
        let clean = nm.clean_twin();
        let zeroed = clean.clean_twin(); // p = 0 via a different closure
        let spec = LossSpec::binary_cross_entropy();
        let cfg = sphere_cfg(500, 11);
        let a = sgd_single_pass(&clean, &WeightFunction::Unit, &cfg, &spec, None).unwrap();
        let b = sgd_single_pass(&zeroed, &WeightFunction::Unit, &cfg, &spec, None).unwrap();
        assert_eq!(a.params.theta(), b.params.theta());
    }

    #[test]
    fn single_pass_is_deterministic() {
        let (_, nm) = make_sphere_instance(5, 0.2, 3).unwrap();
        let spec = LossSpec::binary_cross_entropy();
        let cfg = sphere_cfg(300, 9);
        let a = sgd_single_pass(&nm, &WeightFunction::Unit, &cfg, &spec, None).unwrap();
        let b = sgd_single_pass(&nm, &WeightFunction::Unit, &cfg, &spec, None).unwrap();
        assert_eq!(a.params.theta(), b.params.theta());
    }

    #[test]
    fn iterates_stay_inside_the_ball() {
        let (_, nm) = make_sphere_instance(4, 0.2, 7).unwrap();
        let data = nm.sample_noisy(40, 2).unwrap();
        let spec = LossSpec::binary_cross_entropy();
        let mut cfg = sphere_cfg(200, 5);
        cfg.step = StepSchedule::InverseSqrt { scale: 0.5 };
        let init = LinearParams::zeros(2, 4);
        let run = sgd_multi_pass(&data, &WeightFunction::Unit, &cfg, &spec, &init, None).unwrap();
        assert_eq!(run.iterates.len(), 200);
        for it in &run.iterates {
            assert!(it.frobenius_norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn zero_frozen_weights_freeze_the_parameters() {
        let (_, nm) = make_sphere_instance(4, 0.2, 7).unwrap();
        let data = nm.sample_noisy(10, 2).unwrap();
        let cfg = sphere_cfg(50, 5);
        let init = LinearParams::zeros(2, 4);
        let run = sgd_multi_pass(
            &data,
            &WeightFunction::Frozen(vec![0.0; 10]),
            &cfg,
            &LossSpec::binary_cross_entropy(),
            &init,
            None,
        )
        .unwrap();
        for it in &run.iterates {
            assert!(it.theta().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn single_example_dataset_converges_toward_its_minimizer() {
        let ex = Example::new(vec![1.0, 0.0], LabelVec::one_hot(0, 2).unwrap()).unwrap();
        let data = Dataset::new(vec![ex.clone()], Split::Labeled, 0).unwrap();
        let mut cfg = sphere_cfg(2000, 3);
        cfg.step = StepSchedule::Constant { scale: 2.0 };
        let init = LinearParams::zeros(2, 2);
        let run = sgd_multi_pass(&data, &WeightFunction::Unit, &cfg, &ce(), &init, None).unwrap();
        let last = run.iterates.last().unwrap();
        let loss = loss_value(&ex.label, &last.logits(&ex.features), &ce()).unwrap();
        // Inside the unit ball the best loss on this example is about
        // log(1 + exp(-sqrt(2))): the margin can reach sqrt(2) at most.
        let bound = (1.0 + (-(2.0f64.sqrt())).exp()).ln();
        assert!(loss < bound + 0.05, "loss {loss} vs bound {bound}");
    }

    #[test]
    fn best_iterate_selection() {
        let (_, nm) = make_sphere_instance(4, 0.2, 7).unwrap();
        let heldout = nm.sample_clean(200, 77).unwrap();
        let spec = LossSpec::binary_cross_entropy();
        let single = vec![LinearParams::zeros(2, 4)];
        let (idx, _) = best_iterate(&single, &heldout, &spec).unwrap();
        assert_eq!(idx, 0);

        let data = nm.sample_noisy(50, 2).unwrap();
        let mut cfg = sphere_cfg(100, 5);
        cfg.step = StepSchedule::Constant { scale: 0.5 };
        let init = LinearParams::zeros(2, 4);
        let run = sgd_multi_pass(&data, &WeightFunction::Unit, &cfg, &spec, &init, None).unwrap();
        let (best_idx, best) = best_iterate(&run.iterates, &heldout, &spec).unwrap();
        let best_risk = empirical_risk(best, &heldout, &spec).unwrap();
        let last_risk =
            empirical_risk(run.iterates.last().unwrap(), &heldout, &spec).unwrap();
        assert!(best_risk <= last_risk + 1e-12);

        // Duplicating the list keeps the earliest-index tie rule.
        let mut doubled = run.iterates.clone();
        doubled.extend(run.iterates.iter().cloned());
        let (idx2, _) = best_iterate(&doubled, &heldout, &spec).unwrap();
        assert_eq!(idx2, best_idx);
    }

    #[test]
    fn permutation_mode_visits_everything_each_epoch() {
        let (_, nm) = make_sphere_instance(4, 0.2, 7).unwrap();
        let data = nm.sample_noisy(8, 2).unwrap();
        let mut cfg = sphere_cfg(17, 5); // two full epochs of 8
        cfg.sampling = SamplingMode::PermutationPerEpoch;
        let init = LinearParams::zeros(2, 4);
        let run = sgd_multi_pass(
            &data,
            &WeightFunction::Unit,
            &cfg,
            &LossSpec::binary_cross_entropy(),
            &init,
            None,
        )
        .unwrap();
        assert_eq!(run.iterates.len(), 17);
    }
}
