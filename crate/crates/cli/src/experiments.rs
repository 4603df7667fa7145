//! Experiment runners.
//!
//! Each runner writes its result files under the directory it is given
//! and returns a serializable summary; the same runners back the
//! `experiment` subcommand and the acceptance suite. All randomness
//! flows from the single seed passed in, so reruns are byte-identical.

use crate::io::{save_plain_weights_csv, save_weight_records_csv};
use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use wdistill_core::data::LabelVec;
use wdistill_core::debias::{
    bias_functional, exact_clean_risk, exact_noisy_risks, mse_crossover_predicate, mse_pair,
    model_distortion, raw_debias_weight, regularity_constants, ExpectationMode,
};
use wdistill_core::estimator::{ConfidenceMetric, ValidationIndex};
use wdistill_core::loss::{cross_entropy, empirical_risk, LossSpec};
use wdistill_core::noise::{
    make_sphere_instance, synthetic_mixture_task, FeatureSampler, MixtureSpec, MixtureTask,
    NoiseModel,
};
use wdistill_core::optimize::{
    sgd_single_pass, weighted_loss_gradient, weighted_loss_value, ExampleWeight, SamplingMode,
    SgdConfig, StepSchedule, WeightFunction,
};
use wdistill_core::pipeline::{
    run_distillation_on_task, train_teacher, DistillConfig, LabelMode, WeightScheme,
};
use wdistill_core::rng::{child_seed, stream, substream};
use wdistill_core::{LinearParams, Result as CoreResult};

pub const EXPERIMENT_IDS: &[&str] = &[
    "debias-identity",
    "mse-grid",
    "naive-fails",
    "sgd-convergence",
    "knn-consistency",
    "distill-e2e",
    "gradient-check",
];

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(())
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - mean_a) * (y - mean_b);
        var_a += (x - mean_a) * (x - mean_a);
        var_b += (y - mean_b) * (y - mean_b);
    }
    if var_a <= 0.0 || var_b <= 0.0 {
        return 0.0;
    }
    cov / (var_a * var_b).sqrt()
}

// ---------------------------------------------------------------------------
// debias-identity
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct DebiasIdentitySummary {
    pub support_points: usize,
    pub clean_risk: f64,
    pub exact_unweighted: f64,
    pub exact_weighted: f64,
    pub bias: f64,
    pub weighted_identity_gap: f64,
    pub unweighted_identity_gap: f64,
    pub exact_tolerance: f64,
    pub mc_samples: usize,
    pub mc_weighted_mean: f64,
    pub mc_weighted_std_error: f64,
    pub mc_unweighted_mean: f64,
    pub mc_unweighted_std_error: f64,
    pub mc_sigma_budget: f64,
    pub exact_pass: bool,
    pub mc_pass: bool,
    pub pass: bool,
}

/// Discrete noise model with hand-set corruption probabilities and a
/// mix of one-hot and soft adversarial labels (one harmless, one with
/// p = 0).
fn identity_noise_model() -> NoiseModel {
    let points: Vec<Vec<f64>> = vec![
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![-1.0, 0.5],
        vec![0.5, -0.5],
        vec![2.0, 1.0],
        vec![-0.3, -1.2],
    ];
    let masses = vec![0.28, 0.22, 0.18, 0.14, 0.1, 0.08];
    let truths = [0usize, 1, 2, 0, 1, 2];
    let ps = [0.0, 0.4, 0.8, 0.25, 0.6, 1.0];
    let advs: Vec<LabelVec> = vec![
        LabelVec::one_hot(1, 3).unwrap(),
        LabelVec::one_hot(2, 3).unwrap(),
        LabelVec::soft(vec![0.1, 0.7, 0.2]).unwrap(),
        LabelVec::one_hot(0, 3).unwrap(), // equals the truth: distortion 1
        LabelVec::soft(vec![0.45, 0.1, 0.45]).unwrap(),
        LabelVec::one_hot(0, 3).unwrap(),
    ];
    let locate = {
        let pts = points.clone();
        move |x: &[f64]| -> usize {
            pts.iter()
                .position(|p| p.iter().zip(x).all(|(a, b)| a.to_bits() == b.to_bits()))
                .expect("x from the support")
        }
    };
    let l1 = locate.clone();
    let l2 = locate.clone();
    let l3 = locate;
    NoiseModel::new(
        Arc::new(move |x: &[f64]| truths[l1(x)]),
        Arc::new(move |x: &[f64]| ps[l2(x)]),
        Arc::new(move |x: &[f64]| advs[l3(x)].clone()),
        FeatureSampler::discrete(points, masses).unwrap(),
        3,
    )
    .unwrap()
}

pub fn run_debias_identity(seed: u64, out: &Path) -> Result<DebiasIdentitySummary> {
    ensure_dir(out)?;
    let nm = identity_noise_model();
    let spec = LossSpec::cross_entropy();
    // A fixed, seeded model inside the unit ball.
    let mut rng = stream(seed, 0);
    use rand::Rng;
    let mut theta = ndarray::Array2::zeros((3, 2));
    theta.mapv_inplace(|_: f64| rng.random::<f64>() - 0.5);
    let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    theta.mapv_inplace(|v| 0.9 * v / norm);
    let model = LinearParams::from_matrix(theta, 1.0)?;

    let clean = exact_clean_risk(&nm, &model, &spec)?;
    let (unweighted, weighted) = exact_noisy_risks(&nm, &model, &spec, false)?;
    let bias = bias_functional(&nm, &model, &spec, ExpectationMode::Exact)?;
    let weighted_gap = (weighted - clean).abs();
    let unweighted_gap = (unweighted - clean - bias.value).abs();
    let exact_tolerance = 1e-10;
    let exact_pass = weighted_gap <= exact_tolerance && unweighted_gap <= exact_tolerance;

    // Monte Carlo cross-check with per-sample exact raw weights.
    let mc_samples = 100_000;
    let data = nm.sample_noisy(mc_samples, child_seed(seed, 1))?;
    let mut weighted_losses = Vec::with_capacity(mc_samples);
    let mut plain_losses = Vec::with_capacity(mc_samples);
    for ex in data.examples() {
        let logits = model.logits(&ex.features);
        let loss_obs = cross_entropy(&ex.label, &logits, &spec)?;
        let dist = model_distortion(&nm, &model, &spec, &ex.features)?;
        let w = raw_debias_weight(nm.corrupt_prob(&ex.features), dist)?;
        weighted_losses.push(w * loss_obs);
        plain_losses.push(loss_obs);
    }
    let mean_se = |vals: &[f64]| {
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (vals.len() - 1) as f64;
        (mean, (var / vals.len() as f64).sqrt())
    };
    let (w_mean, w_se) = mean_se(&weighted_losses);
    let (u_mean, u_se) = mean_se(&plain_losses);
    let mc_sigma_budget = 4.0;
    let mc_pass = (w_mean - clean).abs() <= mc_sigma_budget * w_se
        && (u_mean - (clean + bias.value)).abs() <= mc_sigma_budget * u_se;

    let summary = DebiasIdentitySummary {
        support_points: 6,
        clean_risk: clean,
        exact_unweighted: unweighted,
        exact_weighted: weighted,
        bias: bias.value,
        weighted_identity_gap: weighted_gap,
        unweighted_identity_gap: unweighted_gap,
        exact_tolerance,
        mc_samples,
        mc_weighted_mean: w_mean,
        mc_weighted_std_error: w_se,
        mc_unweighted_mean: u_mean,
        mc_unweighted_std_error: u_se,
        mc_sigma_budget,
        exact_pass,
        mc_pass,
        pass: exact_pass && mc_pass,
    };
    write_json(&summary, &out.join("debias_identity_summary.json"))?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// mse-grid
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct MseGridSummary {
    pub grid_points: usize,
    pub degenerate_points: usize,
    pub violations: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Exhaustive 101 x 301 grid over p in [0, 1], distortion in [0, 3]
/// (steps of 0.01) comparing the crossover predicate against the direct
/// MSE comparison at unit clean loss.
pub fn run_mse_grid(out: &Path) -> Result<MseGridSummary> {
    ensure_dir(out)?;
    let tolerance = 1e-9;
    let mut csv = String::from("p,distortion,mse_unweighted,mse_weighted,predicate,violation\n");
    let mut violations = 0usize;
    let mut degenerate = 0usize;
    let mut points = 0usize;
    for pi in 0..=100u32 {
        for di in 0..=300u32 {
            let p = pi as f64 / 100.0;
            let d = di as f64 / 100.0;
            points += 1;
            let predicted = mse_crossover_predicate(p, d);
            match mse_pair(p, 1.0, d) {
                Ok((mse_u, mse_w)) => {
                    let diff = mse_w - mse_u;
                    let violation = if predicted {
                        diff <= -tolerance
                    } else {
                        diff >= tolerance
                    };
                    if violation {
                        violations += 1;
                    }
                    let _ = writeln!(
                        csv,
                        "{p},{d},{mse_u},{mse_w},{},{}",
                        predicted as u8, violation as u8
                    );
                }
                Err(_) => {
                    // Only (p, d) = (1, 0): the weight denominator is 0.
                    degenerate += 1;
                    let _ = writeln!(csv, "{p},{d},NaN,NaN,{},0", predicted as u8);
                }
            }
        }
    }
    std::fs::write(out.join("mse_grid.csv"), csv)?;
    let summary = MseGridSummary {
        grid_points: points,
        degenerate_points: degenerate,
        violations,
        tolerance,
        pass: violations == 0,
    };
    write_json(&summary, &out.join("mse_grid_summary.json"))?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// naive-fails and sgd-convergence (shared sphere setup)
// ---------------------------------------------------------------------------

const SPHERE_DIM: usize = 10;
const SPHERE_NOISE: f64 = 0.2;
const SPHERE_ITERATIONS: usize = 100_000;
const SPHERE_EVAL_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, Serialize)]
pub struct SphereTrial {
    pub trial: usize,
    pub treatment_risk: f64,
    pub reference_risk: f64,
    pub gap: f64,
}

fn sphere_sgd_config(seed: u64) -> SgdConfig {
    // Step scale from the unit-weight regularity constants at the
    // default sphere radius; shared by every arm so comparisons are
    // paired.
    let radius = (SPHERE_DIM as f64).sqrt() / SPHERE_NOISE;
    let constants = regularity_constants(
        &LossSpec::binary_cross_entropy(),
        2,
        radius.ceil(),
        (1.0, 1.0, 1.0),
    )
    .expect("valid constants");
    SgdConfig {
        iterations: SPHERE_ITERATIONS,
        step: StepSchedule::Constant {
            scale: 1.0 / constants.kappa,
        },
        constraint_radius: 1.0,
        seed,
        sampling: SamplingMode::WithReplacement,
        log_every: None,
    }
}

/// One sphere trial: train on the noisy stream with the given weight
/// function, and train the clean-twin reference on an independent
/// stream with the same budget; report both Monte Carlo clean risks.
fn sphere_trial(master_seed: u64, trial: usize, weighted: bool) -> CoreResult<SphereTrial> {
    let spec = LossSpec::binary_cross_entropy();
    let instance_seed = child_seed(master_seed, 100 + trial as u64);
    let (_, nm) = make_sphere_instance(SPHERE_DIM, SPHERE_NOISE, instance_seed)?;
    let clean = nm.clean_twin();
    let cfg = sphere_sgd_config(child_seed(master_seed, 200 + trial as u64));
    let mut reference_cfg = cfg.clone();
    reference_cfg.seed = child_seed(master_seed, 400 + trial as u64);

    let treatment_weight = if weighted {
        WeightFunction::ExactDebias {
            model: nm.clone(),
            clamped: false,
        }
    } else {
        WeightFunction::Unit
    };
    let treatment = sgd_single_pass(&nm, &treatment_weight, &cfg, &spec, None)?;
    let reference = sgd_single_pass(&clean, &WeightFunction::Unit, &reference_cfg, &spec, None)?;

    let eval = clean.sample_clean(SPHERE_EVAL_SAMPLES, child_seed(master_seed, 300 + trial as u64))?;
    let treatment_risk = empirical_risk(&treatment.params, &eval, &spec)?;
    let reference_risk = empirical_risk(&reference.params, &eval, &spec)?;
    Ok(SphereTrial {
        trial,
        treatment_risk,
        reference_risk,
        gap: treatment_risk - reference_risk,
    })
}

#[derive(Debug, Serialize)]
pub struct NaiveFailsSummary {
    pub trials: Vec<SphereTrial>,
    pub mean_gap: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Unit-weight SGD on the noisy sphere stream against the clean-trained
/// reference: the mean clean-risk gap must be at least `c/2 - 0.02`.
pub fn run_naive_fails(seed: u64, trials: usize, out: &Path) -> Result<NaiveFailsSummary> {
    ensure_dir(out)?;
    let results: Vec<SphereTrial> = (0..trials)
        .into_par_iter()
        .map(|t| sphere_trial(seed, t, false))
        .collect::<CoreResult<Vec<_>>>()?;
    let mean_gap = results.iter().map(|r| r.gap).sum::<f64>() / results.len() as f64;
    let threshold = SPHERE_NOISE / 2.0 - 0.02;

    let mut csv = String::from("trial,naive_risk,reference_risk,gap\n");
    for r in &results {
        let _ = writeln!(csv, "{},{},{},{}", r.trial, r.treatment_risk, r.reference_risk, r.gap);
    }
    std::fs::write(out.join("naive_fails.csv"), csv)?;
    let summary = NaiveFailsSummary {
        mean_gap,
        threshold,
        pass: mean_gap >= threshold,
        trials: results,
    };
    write_json(&summary, &out.join("naive_fails_summary.json"))?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct SgdConvergenceSummary {
    pub trials: Vec<SphereTrial>,
    pub epsilon: f64,
    pub trials_within_epsilon: usize,
    pub required_within: usize,
    pub pass: bool,
}

/// Exactly debiasing (unclamped) weights on the noisy stream must land
/// within epsilon of the clean-trained reference on most trials.
pub fn run_sgd_convergence(seed: u64, trials: usize, out: &Path) -> Result<SgdConvergenceSummary> {
    ensure_dir(out)?;
    let results: Vec<SphereTrial> = (0..trials)
        .into_par_iter()
        .map(|t| sphere_trial(seed, t, true))
        .collect::<CoreResult<Vec<_>>>()?;
    let epsilon = 0.05;
    let within = results.iter().filter(|r| r.gap <= epsilon).count();
    let required = if trials >= 5 { trials - 1 } else { trials };

    let mut csv = String::from("trial,weighted_risk,reference_risk,excess\n");
    for r in &results {
        let _ = writeln!(csv, "{},{},{},{}", r.trial, r.treatment_risk, r.reference_risk, r.gap);
    }
    std::fs::write(out.join("sgd_convergence.csv"), csv)?;
    let summary = SgdConvergenceSummary {
        epsilon,
        trials_within_epsilon: within,
        required_within: required,
        pass: within >= required,
        trials: results,
    };
    write_json(&summary, &out.join("sgd_convergence_summary.json"))?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// gradient-check
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct ModeCheck {
    pub mode: String,
    pub configs: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Serialize)]
pub struct GradientCheckSummary {
    pub modes: Vec<ModeCheck>,
    pub tolerance: f64,
    pub pass: bool,
}

fn finite_difference_gradient(
    params: &LinearParams,
    x: &[f64],
    y: &LabelVec,
    wfn: &ExampleWeight,
    spec: &LossSpec,
) -> CoreResult<ndarray::Array2<f64>> {
    let h = 1e-5;
    let mut grad = ndarray::Array2::zeros((params.num_classes(), params.dim()));
    for i in 0..params.num_classes() {
        for j in 0..params.dim() {
            let mut theta_plus = params.theta().clone();
            theta_plus[[i, j]] += h;
            let plus = LinearParams::from_matrix(theta_plus, params.constraint_radius())?;
            let mut theta_minus = params.theta().clone();
            theta_minus[[i, j]] -= h;
            let minus = LinearParams::from_matrix(theta_minus, params.constraint_radius())?;
            let fp = weighted_loss_value(&plus, x, y, wfn, spec)?;
            let fm = weighted_loss_value(&minus, x, y, wfn, spec)?;
            grad[[i, j]] = (fp - fm) / (2.0 * h);
        }
    }
    Ok(grad)
}

fn frobenius(a: &ndarray::Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// 100 random configurations per weight mode, analytic gradient against
/// central finite differences at h = 1e-5. Exact-debias configurations
/// are resampled until they sit at least 1e-3 away from the clamp
/// boundary and clear of the degenerate-loss floor.
pub fn run_gradient_check(seed: u64, out: &Path) -> Result<GradientCheckSummary> {
    use rand::Rng;
    ensure_dir(out)?;
    let configs = 100usize;
    let tolerance = 1e-5;
    let mut csv = String::from("mode,config,relative_error\n");
    let mut modes = Vec::new();

    for (mode_idx, mode_name) in ["unit", "frozen", "exact_clamped", "exact_unclamped"]
        .iter()
        .enumerate()
    {
        let mut rng = stream(seed, mode_idx as u64);
        let mut max_err = 0.0f64;
        let mut done = 0usize;
        while done < configs {
            let use_bce = done % 4 == 3;
            let classes = if use_bce { 2 } else { 2 + done % 3 };
            let dim = 2 + done % 4;
            let spec = if use_bce {
                LossSpec::binary_cross_entropy()
            } else {
                LossSpec::cross_entropy()
            };
            let mut theta = ndarray::Array2::zeros((classes, dim));
            theta.mapv_inplace(|_: f64| rng.random::<f64>() - 0.5);
            let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
            theta.mapv_inplace(|v| 0.85 * v / norm.max(1e-9));
            let params = LinearParams::from_matrix(theta, 1.0)?;
            let x: Vec<f64> = (0..dim).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let observed = LabelVec::one_hot((rng.random::<u64>() % classes as u64) as usize, classes)?;

            // Exact modes need a noise oracle at this x.
            let truth = (rng.random::<u64>() % classes as u64) as usize;
            let adv = (truth + 1 + (rng.random::<u64>() % (classes as u64 - 1)) as usize) % classes;
            let p = 0.15 + 0.7 * rng.random::<f64>();
            let oracle = NoiseModel::new(
                Arc::new(move |_: &[f64]| truth),
                Arc::new(move |_: &[f64]| p),
                Arc::new(move |_: &[f64]| LabelVec::one_hot(adv, classes).unwrap()),
                FeatureSampler::discrete(vec![x.clone()], vec![1.0])?,
                classes,
            )?;

            let wfn = match mode_idx {
                0 => ExampleWeight::Unit,
                1 => ExampleWeight::Frozen(rng.random::<f64>()),
                2 => ExampleWeight::ExactDebias {
                    model: &oracle,
                    clamped: true,
                },
                _ => ExampleWeight::ExactDebias {
                    model: &oracle,
                    clamped: false,
                },
            };
            if matches!(wfn, ExampleWeight::ExactDebias { .. }) {
                // Stay away from the clamp kink and loss degeneracies.
                let logits = params.logits(&x);
                let l_true = cross_entropy_or_bce(&oracle.ground_truth_label(&x), &logits, &spec)?;
                let l_adv = cross_entropy_or_bce(&oracle.adversarial_label(&x), &logits, &spec)?;
                if l_true < 1e-3 || l_adv < 1e-3 {
                    continue;
                }
                let raw = raw_debias_weight(p, l_adv / l_true);
                match raw {
                    Ok(w) if (w - 1.0).abs() > 1e-3 => {}
                    _ => continue,
                }
            }
            let analytic = weighted_loss_gradient(&params, &x, &observed, &wfn, &spec)?;
            let numeric = finite_difference_gradient(&params, &x, &observed, &wfn, &spec)?;
            let rel = frobenius(&(&analytic - &numeric)) / frobenius(&numeric).max(1e-10);
            max_err = max_err.max(rel);
            let _ = writeln!(csv, "{mode_name},{done},{rel}");
            done += 1;
        }
        modes.push(ModeCheck {
            mode: mode_name.to_string(),
            configs,
            max_relative_error: max_err,
        });
    }
    std::fs::write(out.join("gradient_check.csv"), csv)?;
    let pass = modes.iter().all(|m| m.max_relative_error <= tolerance);
    let summary = GradientCheckSummary {
        modes,
        tolerance,
        pass,
    };
    write_json(&summary, &out.join("gradient_check_summary.json"))?;
    Ok(summary)
}

fn cross_entropy_or_bce(target: &LabelVec, logits: &[f64], spec: &LossSpec) -> CoreResult<f64> {
    wdistill_core::loss::loss_value(target, logits, spec)
}

// ---------------------------------------------------------------------------
// knn-consistency
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct KnnSizeResult {
    pub validation_size: usize,
    pub k: usize,
    pub mean_mae_p: f64,
    pub mean_mae_distortion: f64,
}

#[derive(Debug, Serialize)]
pub struct KnnConsistencySummary {
    pub sizes: Vec<KnnSizeResult>,
    pub seeds: usize,
    pub queries: usize,
    pub mae_p_threshold: f64,
    pub final_mae_p: f64,
    pub k_rule_ok: bool,
    pub mae_p_non_increasing: bool,
    pub mae_distortion_non_increasing: bool,
    pub pass: bool,
}

/// Known generative map on the confidence plane: covariates are uniform
/// on the unit square, `p` is a step function of teacher confidence and
/// the distortion response is a Lipschitz function of both coordinates.
/// The estimator should recover the conditional means with shrinking
/// error as the validation set grows.
pub fn run_knn_consistency(seed: u64, out: &Path) -> Result<KnnConsistencySummary> {
    use rand::Rng;
    ensure_dir(out)?;
    let sizes = [100usize, 400, 1600];
    let seeds = 10usize;
    let queries = 1000usize;
    let p_true = |tc: f64| if tc < 0.5 { 0.8 } else { 0.1 };
    let d_wrong = |tc: f64, sc: f64| 1.0 + tc + 0.5 * sc;
    // Conditional mean of the distortion response: teacher-correct
    // neighbors contribute 1, teacher-wrong ones contribute d_wrong.
    let d_mean =
        |tc: f64, sc: f64| 1.0 + p_true(tc) * (d_wrong(tc, sc) - 1.0);

    let mut csv = String::from("validation_size,seed,k,mae_p,mae_distortion\n");
    let mut size_results = Vec::new();
    let mut k_rule_ok = true;
    for (si, &size) in sizes.iter().enumerate() {
        let mut mae_p_acc = 0.0;
        let mut mae_d_acc = 0.0;
        for s in 0..seeds {
            let mut rng = substream(seed, si as u64, s as u64);
            let mut points = Vec::with_capacity(size);
            let mut responses = Vec::with_capacity(size);
            for _ in 0..size {
                let tc: f64 = rng.random();
                let sc: f64 = rng.random();
                points.push([tc, sc]);
                if rng.random::<f64>() < p_true(tc) {
                    responses.push([1.0, d_wrong(tc, sc)]);
                } else {
                    responses.push([0.0, 1.0]);
                }
            }
            let index = ValidationIndex::from_parts(points, responses, ConfidenceMetric::Margin)?;
            let expected_k = ((size as f64).sqrt() / 2.0).ceil() as usize;
            if index.k() != expected_k {
                k_rule_ok = false;
            }
            // Queries fixed per seed (shared across sizes) for pairing.
            let mut query_rng = substream(seed, 1000, s as u64);
            let mut mae_p = 0.0;
            let mut mae_d = 0.0;
            for _ in 0..queries {
                let tc: f64 = query_rng.random();
                let sc: f64 = query_rng.random();
                let (p_hat, d_hat) = index.query([tc, sc]);
                mae_p += (p_hat - p_true(tc)).abs();
                mae_d += (d_hat - d_mean(tc, sc)).abs();
            }
            mae_p /= queries as f64;
            mae_d /= queries as f64;
            let _ = writeln!(csv, "{size},{s},{},{mae_p},{mae_d}", index.k());
            mae_p_acc += mae_p;
            mae_d_acc += mae_d;
        }
        size_results.push(KnnSizeResult {
            validation_size: size,
            k: ((size as f64).sqrt() / 2.0).ceil() as usize,
            mean_mae_p: mae_p_acc / seeds as f64,
            mean_mae_distortion: mae_d_acc / seeds as f64,
        });
    }
    std::fs::write(out.join("knn_consistency.csv"), csv)?;

    let mae_p_threshold = 0.1;
    let final_mae_p = size_results.last().unwrap().mean_mae_p;
    let mae_p_non_increasing = size_results
        .windows(2)
        .all(|w| w[1].mean_mae_p <= w[0].mean_mae_p + 1e-12);
    let mae_d_non_increasing = size_results
        .windows(2)
        .all(|w| w[1].mean_mae_distortion <= w[0].mean_mae_distortion + 1e-12);
    let pass =
        k_rule_ok && final_mae_p <= mae_p_threshold && mae_p_non_increasing && mae_d_non_increasing;
    let summary = KnnConsistencySummary {
        sizes: size_results,
        seeds,
        queries,
        mae_p_threshold,
        final_mae_p,
        k_rule_ok,
        mae_p_non_increasing,
        mae_distortion_non_increasing: mae_d_non_increasing,
        pass,
    };
    write_json(&summary, &out.join("knn_consistency_summary.json"))?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// distill-e2e
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct DistillTrial {
    pub trial: usize,
    pub teacher_accuracy: f64,
    pub student_pretrain_accuracy: f64,
    pub ours_accuracy: f64,
    pub unit_accuracy: f64,
    pub improvement: f64,
    pub weight_correlation: f64,
}

#[derive(Debug, Serialize)]
pub struct DistillE2eSummary {
    pub trials: Vec<DistillTrial>,
    pub mean_improvement: f64,
    pub mean_correlation: f64,
    pub teacher_accuracy_band: (f64, f64),
    pub teachers_in_band: usize,
    pub correlation_threshold: f64,
    pub pass: bool,
}

/// Mixture task sized so the teacher lands in the 0.7-0.9 accuracy band.
fn e2e_task(task_seed: u64) -> CoreResult<MixtureTask> {
    synthetic_mixture_task(&MixtureSpec {
        dim: 10,
        num_classes: 4,
        n_labeled: 60,
        n_unlabeled: 1200,
        n_validation: 400,
        n_test: 2000,
        separation: 2.2,
        seed: task_seed,
    })
}

fn e2e_config(seed: u64) -> DistillConfig {
    // Radius 4 lets the linear models reach confident predictions, so
    // margins and distortion ratios carry signal at this scale.
    let sgd = |iterations: usize| SgdConfig {
        iterations,
        step: StepSchedule::Constant { scale: 2.0 },
        constraint_radius: 4.0,
        seed: 0,
        sampling: SamplingMode::WithReplacement,
        log_every: None,
    };
    DistillConfig {
        student_dim: 6,
        label_mode: LabelMode::Hard,
        refresh_rounds: 1,
        weight_scheme: WeightScheme::Ours,
        metric: ConfidenceMetric::Margin,
        temperature: 1.0,
        seed,
        teacher_sgd: sgd(4000),
        pretrain_sgd: sgd(2000),
        distill_sgd: sgd(6000),
        log_every: 250,
    }
}

fn e2e_trial(master_seed: u64, trial: usize, out: Option<&Path>) -> Result<DistillTrial> {
    let task_seed = child_seed(master_seed, 1_000 + trial as u64);
    let pipeline_seed = child_seed(master_seed, 2_000 + trial as u64);
    let task = e2e_task(task_seed)?;
    let cfg = e2e_config(pipeline_seed);
    let report = run_distillation_on_task(&task, &cfg)?;

    // Weight-versus-correctness correlation on the unlabeled pool: the
    // teacher is reproducible from the same seed derivation the
    // pipeline uses.
    let teacher = train_teacher(
        &task.labeled,
        &cfg.teacher_sgd,
        &LossSpec::cross_entropy(),
        cfg.seed,
    )?;
    let correct: Vec<f64> = task
        .unlabeled
        .examples()
        .iter()
        .map(|ex| {
            (teacher.classify(&ex.features) == task.ground_truth_class(&ex.features)) as u8 as f64
        })
        .collect();
    let weights = &report.primary.unlabeled_weights;
    let correlation = pearson(weights, &correct);

    if let Some(dir) = out {
        crate::plots::export_report(&report, dir)?;
        let records = report
            .primary
            .unlabeled_records
            .as_ref()
            .expect("ours scheme has records");
        save_weight_records_csv(records, &dir.join("weights_ours.csv"))?;
        save_plain_weights_csv(&vec![1.0; task.labeled.len()], &dir.join("weights_labeled.csv"))?;
        write_json(&report, &dir.join("report.json"))?;
    }

    Ok(DistillTrial {
        trial,
        teacher_accuracy: report.teacher_accuracy,
        student_pretrain_accuracy: report.student_pretrain_accuracy,
        ours_accuracy: report.primary.final_accuracy,
        unit_accuracy: report.unit_baseline.final_accuracy,
        improvement: report.primary.final_accuracy - report.unit_baseline.final_accuracy,
        weight_correlation: correlation,
    })
}

/// Paired weighted-versus-unweighted distillation on the mixture task.
pub fn run_distill_e2e(seed: u64, trials: usize, out: &Path) -> Result<DistillE2eSummary> {
    ensure_dir(out)?;
    let results: Vec<DistillTrial> = (0..trials)
        .into_par_iter()
        .map(|t| e2e_trial(seed, t, if t == 0 { Some(out) } else { None }))
        .collect::<Result<Vec<_>>>()?;
    let mean_improvement =
        results.iter().map(|r| r.improvement).sum::<f64>() / results.len() as f64;
    let mean_correlation =
        results.iter().map(|r| r.weight_correlation).sum::<f64>() / results.len() as f64;
    let band = (0.7, 0.9);
    let in_band = results
        .iter()
        .filter(|r| r.teacher_accuracy >= band.0 && r.teacher_accuracy <= band.1)
        .count();
    let correlation_threshold = 0.5;
    let pass = mean_improvement >= 0.0
        && mean_correlation > correlation_threshold
        && in_band == results.len();

    let mut csv = String::from(
        "trial,teacher_accuracy,pretrain_accuracy,ours_accuracy,unit_accuracy,improvement,weight_correlation\n",
    );
    for r in &results {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.trial,
            r.teacher_accuracy,
            r.student_pretrain_accuracy,
            r.ours_accuracy,
            r.unit_accuracy,
            r.improvement,
            r.weight_correlation
        );
    }
    std::fs::write(out.join("distill_e2e.csv"), csv)?;
    let summary = DistillE2eSummary {
        trials: results,
        mean_improvement,
        mean_correlation,
        teacher_accuracy_band: band,
        teachers_in_band: in_band,
        correlation_threshold,
        pass,
    };
    write_json(&summary, &out.join("distill_e2e_summary.json"))?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// weight scanning (acceptance criterion: weight ranges)
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Serialize)]
pub struct WeightScan {
    pub files: usize,
    pub rows: usize,
    pub out_of_range: usize,
    pub labeled_not_unit: usize,
}

impl WeightScan {
    pub fn pass(&self) -> bool {
        self.out_of_range == 0 && self.labeled_not_unit == 0
    }
}

/// Recursively scan every `weights*.csv` under `root`: all weights must
/// lie in [0, 1] and files named `weights_labeled*` must be exactly 1.
pub fn scan_weight_csvs(root: &Path) -> Result<WeightScan> {
    let mut scan = WeightScan::default();
    let mut stack = vec![root.to_path_buf()];
    let mut files = Vec::new();
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))? {
            let entry = entry?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                if name.starts_with("weights") && name.ends_with(".csv") && name != "weights_hist.csv" {
                    files.push(path);
                }
            }
        }
    }
    files.sort();
    for path in files {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        let weights = crate::io::load_weight_column(&path)?;
        scan.files += 1;
        scan.rows += weights.len();
        for w in weights {
            if !(0.0..=1.0).contains(&w) {
                scan.out_of_range += 1;
            }
            if name.starts_with("weights_labeled") && w != 1.0 {
                scan.labeled_not_unit += 1;
            }
        }
    }
    Ok(scan)
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

/// Run one experiment by id; returns its one-line summary.
pub fn run_experiment(id: &str, seed: u64, trials: usize, out: &Path) -> Result<String> {
    match id {
        "debias-identity" => {
            let s = run_debias_identity(seed, out)?;
            Ok(format!(
                "debias-identity: weighted gap {:.2e}, unweighted gap {:.2e}, MC within {} sigma: {} => {}",
                s.weighted_identity_gap,
                s.unweighted_identity_gap,
                s.mc_sigma_budget,
                s.mc_pass,
                status(s.pass)
            ))
        }
        "mse-grid" => {
            let s = run_mse_grid(out)?;
            Ok(format!(
                "mse-grid: {} points, {} degenerate, {} violations => {}",
                s.grid_points,
                s.degenerate_points,
                s.violations,
                status(s.pass)
            ))
        }
        "naive-fails" => {
            let s = run_naive_fails(seed, trials, out)?;
            Ok(format!(
                "naive-fails: mean clean-risk gap {:.4} (threshold {:.2}) => {}",
                s.mean_gap,
                s.threshold,
                status(s.pass)
            ))
        }
        "sgd-convergence" => {
            let s = run_sgd_convergence(seed, trials, out)?;
            Ok(format!(
                "sgd-convergence: {}/{} trials within eps {:.2} => {}",
                s.trials_within_epsilon,
                s.trials.len(),
                s.epsilon,
                status(s.pass)
            ))
        }
        "knn-consistency" => {
            let s = run_knn_consistency(seed, out)?;
            Ok(format!(
                "knn-consistency: MAE(p) at 1600 = {:.4} (<= {:.2}), monotone {} => {}",
                s.final_mae_p,
                s.mae_p_threshold,
                s.mae_p_non_increasing && s.mae_distortion_non_increasing,
                status(s.pass)
            ))
        }
        "distill-e2e" => {
            let s = run_distill_e2e(seed, trials, out)?;
            Ok(format!(
                "distill-e2e: mean improvement {:+.4}, weight-correctness corr {:.3} => {}",
                s.mean_improvement,
                s.mean_correlation,
                status(s.pass)
            ))
        }
        "gradient-check" => {
            let s = run_gradient_check(seed, out)?;
            let worst = s
                .modes
                .iter()
                .map(|m| m.max_relative_error)
                .fold(0.0f64, f64::max);
            Ok(format!(
                "gradient-check: max relative error {:.2e} (tolerance {:.0e}) => {}",
                worst,
                s.tolerance,
                status(s.pass)
            ))
        }
        other => bail!("unknown experiment `{other}`"),
    }
}

fn status(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}
