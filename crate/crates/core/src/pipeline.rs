//! End-to-end weighted distillation.
//!
//! The flow: train a teacher on the labeled split, let it label the
//! unlabeled pool (hard or soft), pretrain the student on the labeled
//! split, then repeat `r` times: estimate per-example weights and train
//! the student on the weighted union of labeled and teacher-labeled
//! data. Labeled examples always carry weight exactly 1.
//!
//! Teacher and student are both linear softmax models; the capacity gap
//! comes from the student seeing only the first `student_dim` feature
//! coordinates. Every report carries a paired unit-weight baseline run
//! under identical seeds.

use crate::data::{Dataset, LabelVec, Split};
use crate::debias::WeightRecord;
use crate::error::{CoreError, Result};
use crate::estimator::{
    build_validation_index_with_labels, estimate_weights, fidelity_weights, ConfidenceMetric,
};
use crate::linear::LinearParams;
use crate::loss::{softmax, LossSpec};
use crate::noise::MixtureTask;
use crate::optimize::{sgd_multi_pass, SgdConfig, WeightFunction};
use crate::rng::child_seed;
use serde::{Deserialize, Serialize};
use std::collections::hash_map::Entry;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelMode {
    Soft,
    Hard,
}

impl LabelMode {
    pub fn name(self) -> &'static str {
        match self {
            LabelMode::Soft => "soft",
            LabelMode::Hard => "hard",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightScheme {
    /// Debiasing weights from the k-NN estimator.
    Ours,
    /// Teacher-entropy exponential weights.
    Fidelity,
    /// Elementwise product of the two.
    Composition,
    /// Conventional distillation: all weights 1.
    Unit,
}

impl WeightScheme {
    pub fn name(self) -> &'static str {
        match self {
            WeightScheme::Ours => "ours",
            WeightScheme::Fidelity => "fidelity",
            WeightScheme::Composition => "composition",
            WeightScheme::Unit => "unit",
        }
    }
}

/// Configuration of a full distillation run.
///
/// The `seed` fields inside the per-phase SGD configs are ignored: the
/// pipeline derives every phase seed from `seed`, so the weighted run
/// and its unit baseline consume identical sample streams.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistillConfig {
    pub student_dim: usize,
    pub label_mode: LabelMode,
    pub refresh_rounds: usize,
    pub weight_scheme: WeightScheme,
    pub metric: ConfidenceMetric,
    pub temperature: f64,
    pub seed: u64,
    pub teacher_sgd: SgdConfig,
    pub pretrain_sgd: SgdConfig,
    /// One round of student training per weight refresh.
    pub distill_sgd: SgdConfig,
    /// Cadence (in SGD steps) of the test-accuracy trajectory.
    pub log_every: usize,
}

const TEACHER_PHASE: u64 = 1;
const PRETRAIN_PHASE: u64 = 2;
const DISTILL_PHASE: u64 = 3;

/// Truncation to the first `student_dim` coordinates: the student's
/// feature map. A linear projection, so the student model class is a
/// restriction of the teacher's.
pub fn student_feature_map(features: &[f64], student_dim: usize) -> Vec<f64> {
    debug_assert!(student_dim <= features.len());
    features[..student_dim].to_vec()
}

/// Apply [`student_feature_map`] to a whole dataset.
pub fn truncate_dataset(data: &Dataset, student_dim: usize) -> Result<Dataset> {
    if student_dim > data.dim() {
        return Err(CoreError::InvalidInput(format!(
            "student_dim {} exceeds feature dim {}",
            student_dim,
            data.dim()
        )));
    }
    let examples = data
        .examples()
        .iter()
        .map(|ex| {
            crate::data::Example::new(
                student_feature_map(&ex.features, student_dim),
                ex.label.clone(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let ds = Dataset::new(examples, data.split(), data.seed())?;
    Ok(ds)
}

/// Train the teacher: multi-pass SGD on the labeled split over the full
/// feature map, last iterate.
pub fn train_teacher(labeled: &Dataset, cfg: &SgdConfig, spec: &LossSpec, seed: u64) -> Result<LinearParams> {
    labeled.require_labels()?;
    let mut cfg = cfg.clone();
    cfg.seed = child_seed(seed, TEACHER_PHASE);
    let init = LinearParams::zeros(labeled.num_classes(), labeled.dim());
    let run = sgd_multi_pass(labeled, &WeightFunction::Unit, &cfg, spec, &init, None)?;
    Ok(run.iterates.last().expect("at least the init").clone())
}

/// Label a pool with the teacher. Soft mode stores the full softmax at
/// the given temperature; hard mode stores the one-hot argmax.
pub fn teacher_label(
    teacher: &LinearParams,
    pool: &Dataset,
    mode: LabelMode,
    temperature: f64,
) -> Result<Dataset> {
    let labels = pool
        .examples()
        .iter()
        .map(|ex| {
            let logits = teacher.logits(&ex.features);
            match mode {
                LabelMode::Soft => softmax(&logits, temperature),
                LabelMode::Hard => {
                    LabelVec::one_hot(crate::data::argmax(&logits), teacher.num_classes())
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    pool.with_labels(labels)
}

/// One `(step, test accuracy)` sample of a training trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub step: usize,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl WeightSummary {
    fn of(weights: &[f64]) -> Self {
        let min = weights.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = weights.iter().sum::<f64>() / weights.len() as f64;
        Self { min, max, mean }
    }
}

/// Result of training one scheme.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeOutcome {
    pub scheme: WeightScheme,
    pub trajectory: Vec<AccuracyPoint>,
    pub final_accuracy: f64,
    /// Number of weight refreshes performed (equals the configured
    /// refresh rounds).
    pub weight_refreshes: usize,
    /// Weights assigned to the unlabeled pool at the last refresh,
    /// in pool order.
    pub unlabeled_weights: Vec<f64>,
    /// Estimator records behind those weights, for schemes that have
    /// them (ours, composition).
    pub unlabeled_records: Option<Vec<WeightRecord>>,
    pub weight_summary: WeightSummary,
}

/// Full report of a paired distillation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistillReport {
    pub weight_scheme: WeightScheme,
    pub label_mode: LabelMode,
    pub metric: ConfidenceMetric,
    pub temperature: f64,
    pub refresh_rounds: usize,
    pub student_dim: usize,
    pub seed: u64,
    pub teacher_accuracy: f64,
    pub student_pretrain_accuracy: f64,
    pub primary: SchemeOutcome,
    pub unit_baseline: SchemeOutcome,
}

fn check_disjoint(splits: &[(&Dataset, &'static str)]) -> Result<()> {
    let mut seen: HashMap<Vec<u64>, &'static str> = HashMap::new();
    for (ds, name) in splits {
        for (index, ex) in ds.examples().iter().enumerate() {
            let key: Vec<u64> = ex.features.iter().map(|v| v.to_bits()).collect();
            match seen.entry(key) {
                Entry::Occupied(prev) => {
                    if prev.get() != name {
                        return Err(CoreError::OverlappingSplits {
                            index,
                            first: prev.get(),
                            second: name,
                        });
                    }
                }
                Entry::Vacant(slot) => {
                    slot.insert(name);
                }
            }
        }
    }
    Ok(())
}

struct SchemeContext<'a> {
    cfg: &'a DistillConfig,
    spec: LossSpec,
    teacher_preds_validation: Vec<LabelVec>,
    teacher_preds_unlabeled: Vec<LabelVec>,
    teacher_preds_labeled: Vec<LabelVec>,
    validation_student: Dataset,
    validation_labels: Vec<LabelVec>,
    train_union: Dataset,
    n_labeled: usize,
    test_student: Dataset,
    pretrained: LinearParams,
}

impl SchemeContext<'_> {
    /// Weights for the unlabeled pool under a scheme, given the current
    /// student. Returns the flat weights and, when the scheme estimates
    /// them, the underlying records.
    fn unlabeled_weights(
        &self,
        scheme: WeightScheme,
        student: &LinearParams,
    ) -> Result<(Vec<f64>, Option<Vec<WeightRecord>>)> {
        let n_unlabeled = self.teacher_preds_unlabeled.len();
        match scheme {
            WeightScheme::Unit => Ok((vec![1.0; n_unlabeled], None)),
            WeightScheme::Fidelity => Ok((self.fidelity_unlabeled()?, None)),
            WeightScheme::Ours => {
                let records = self.estimated_records(student)?;
                let weights = records.iter().map(|r| r.weight).collect();
                Ok((weights, Some(records)))
            }
            WeightScheme::Composition => {
                let records = self.estimated_records(student)?;
                let fidelity = self.fidelity_unlabeled()?;
                let weights: Vec<f64> = records
                    .iter()
                    .zip(&fidelity)
                    .map(|(r, f)| r.weight * f)
                    .collect();
                // Both factors live in [0, 1], so the product needs no
                // further projection; keep that checked.
                assert!(
                    weights.iter().all(|w| (0.0..=1.0 + 1e-12).contains(w)),
                    "composition weights left [0, 1]"
                );
                Ok((weights, Some(records)))
            }
        }
    }

    /// Alg. 2 records with student confidences and distortions
    /// recomputed at the current student. The distortion response uses
    /// the label the teacher would assign under the configured mode;
    /// confidence always uses the soft prediction.
    fn estimated_records(&self, student: &LinearParams) -> Result<Vec<WeightRecord>> {
        let student_preds_validation = self
            .validation_student
            .examples()
            .iter()
            .map(|ex| student.predict(&ex.features, self.cfg.temperature))
            .collect::<Result<Vec<_>>>()?;
        let teacher_assigned: Vec<LabelVec> = match self.cfg.label_mode {
            LabelMode::Soft => self.teacher_preds_validation.clone(),
            LabelMode::Hard => self
                .teacher_preds_validation
                .iter()
                .map(|p| LabelVec::one_hot(p.top_class(), p.num_classes()))
                .collect::<Result<Vec<_>>>()?,
        };
        let index = build_validation_index_with_labels(
            &self.teacher_preds_validation,
            &teacher_assigned,
            &student_preds_validation,
            &self.validation_labels,
            &self.spec,
            self.cfg.metric,
        )?;
        let student_preds_unlabeled = self
            .train_union
            .examples()
            .iter()
            .skip(self.n_labeled)
            .map(|ex| student.predict(&ex.features, self.cfg.temperature))
            .collect::<Result<Vec<_>>>()?;
        estimate_weights(&index, &self.teacher_preds_unlabeled, &student_preds_unlabeled)
    }

    /// Fidelity weights of the unlabeled pool; the mean entropy is taken
    /// over the teacher's predictions on the whole training union.
    fn fidelity_unlabeled(&self) -> Result<Vec<f64>> {
        let mut all_preds = self.teacher_preds_labeled.clone();
        all_preds.extend(self.teacher_preds_unlabeled.iter().cloned());
        let fw = fidelity_weights(&all_preds)?;
        Ok(fw.weights[self.n_labeled..].to_vec())
    }

    fn run_scheme(&self, scheme: WeightScheme) -> Result<SchemeOutcome> {
        let mut student = self
            .pretrained
            .clone()
            .with_radius(self.cfg.distill_sgd.constraint_radius)?;
        let mut trajectory = Vec::new();
        let mut last_weights = Vec::new();
        let mut last_records = None;
        let mut global_step = 0usize;
        trajectory.push(AccuracyPoint {
            step: 0,
            test_accuracy: student.accuracy(&self.test_student)?,
        });
        for round in 1..=self.cfg.refresh_rounds {
            let (unlabeled, records) = self.unlabeled_weights(scheme, &student)?;
            let mut weights = vec![1.0; self.n_labeled];
            weights.extend(unlabeled.iter().cloned());
            last_weights = unlabeled;
            last_records = records;

            let mut sgd = self.cfg.distill_sgd.clone();
            sgd.seed = child_seed(self.cfg.seed, DISTILL_PHASE + round as u64);
            let run = sgd_multi_pass(
                &self.train_union,
                &WeightFunction::Frozen(weights),
                &sgd,
                &self.spec,
                &student,
                None,
            )?;
            // Iterate 0 repeats the round's starting point; updates
            // begin at index 1.
            for (offset, iterate) in run.iterates.iter().enumerate().skip(1) {
                let step = global_step + offset;
                if step % self.cfg.log_every == 0 {
                    trajectory.push(AccuracyPoint {
                        step,
                        test_accuracy: iterate.accuracy(&self.test_student)?,
                    });
                }
            }
            global_step += run.iterates.len() - 1;
            student = run.iterates.last().expect("non-empty iterate list").clone();
        }
        let final_accuracy = student.accuracy(&self.test_student)?;
        if trajectory.last().map(|p| p.step) != Some(global_step) {
            trajectory.push(AccuracyPoint {
                step: global_step,
                test_accuracy: final_accuracy,
            });
        }
        let weight_summary = WeightSummary::of(&last_weights);
        Ok(SchemeOutcome {
            scheme,
            trajectory,
            final_accuracy,
            weight_refreshes: self.cfg.refresh_rounds,
            unlabeled_weights: last_weights,
            unlabeled_records: last_records,
            weight_summary,
        })
    }
}

/// Run the full pipeline and its paired unit baseline.
pub fn run_distillation(
    labeled: &Dataset,
    unlabeled: &Dataset,
    validation: &Dataset,
    test: &Dataset,
    cfg: &DistillConfig,
) -> Result<DistillReport> {
    labeled.require_labels()?;
    validation.require_labels()?;
    test.require_labels()?;
    if cfg.refresh_rounds == 0 {
        return Err(CoreError::InvalidInput("refresh_rounds must be >= 1".into()));
    }
    if cfg.student_dim > labeled.dim() {
        return Err(CoreError::InvalidInput(format!(
            "student_dim {} exceeds feature dim {}",
            cfg.student_dim,
            labeled.dim()
        )));
    }
    if !(cfg.temperature > 0.0) {
        return Err(CoreError::NonPositiveTemperature(cfg.temperature));
    }
    if cfg.log_every == 0 {
        return Err(CoreError::InvalidInput("log_every must be >= 1".into()));
    }
    check_disjoint(&[
        (labeled, "labeled"),
        (unlabeled, "unlabeled"),
        (validation, "validation"),
        (test, "test"),
    ])?;

    // Teacher and pretraining run at temperature 1 on ground-truth
    // labels; the configured temperature applies to the distillation
    // phase (teacher labels, confidences, and the student's loss).
    let hard_spec = LossSpec::cross_entropy();
    let distill_spec = LossSpec::cross_entropy().with_temperature(cfg.temperature)?;

    let teacher = train_teacher(labeled, &cfg.teacher_sgd, &hard_spec, cfg.seed)?;
    let teacher_accuracy = teacher.accuracy(test)?;

    let labeled_pool = teacher_label(&teacher, unlabeled, cfg.label_mode, cfg.temperature)?;

    let labeled_student = truncate_dataset(labeled, cfg.student_dim)?;
    let pool_student = truncate_dataset(&labeled_pool, cfg.student_dim)?;
    let validation_student = truncate_dataset(validation, cfg.student_dim)?;
    let test_student = truncate_dataset(test, cfg.student_dim)?;

    let mut pretrain_sgd = cfg.pretrain_sgd.clone();
    pretrain_sgd.seed = child_seed(cfg.seed, PRETRAIN_PHASE);
    let pretrain_init = LinearParams::zeros(labeled_student.num_classes(), cfg.student_dim);
    let pretrained = sgd_multi_pass(
        &labeled_student,
        &WeightFunction::Unit,
        &pretrain_sgd,
        &hard_spec,
        &pretrain_init,
        None,
    )?
    .iterates
    .last()
    .expect("at least the init")
    .clone();
    let student_pretrain_accuracy = pretrained.accuracy(&test_student)?;

    let train_union = Dataset::concat(&labeled_student, &pool_student, Split::Labeled, cfg.seed)?;

    let teacher_preds_validation = validation
        .examples()
        .iter()
        .map(|ex| teacher.predict(&ex.features, cfg.temperature))
        .collect::<Result<Vec<_>>>()?;
    let teacher_preds_unlabeled = unlabeled
        .examples()
        .iter()
        .map(|ex| teacher.predict(&ex.features, cfg.temperature))
        .collect::<Result<Vec<_>>>()?;
    let teacher_preds_labeled = labeled
        .examples()
        .iter()
        .map(|ex| teacher.predict(&ex.features, cfg.temperature))
        .collect::<Result<Vec<_>>>()?;
    let validation_labels: Vec<LabelVec> = validation
        .examples()
        .iter()
        .map(|ex| ex.label.clone())
        .collect();

    let ctx = SchemeContext {
        cfg,
        spec: distill_spec,
        teacher_preds_validation,
        teacher_preds_unlabeled,
        teacher_preds_labeled,
        validation_student,
        validation_labels,
        train_union,
        n_labeled: labeled.len(),
        test_student,
        pretrained,
    };

    let primary = ctx.run_scheme(cfg.weight_scheme)?;
    let unit_baseline = if cfg.weight_scheme == WeightScheme::Unit {
        primary.clone()
    } else {
        ctx.run_scheme(WeightScheme::Unit)?
    };

    Ok(DistillReport {
        weight_scheme: cfg.weight_scheme,
        label_mode: cfg.label_mode,
        metric: cfg.metric,
        temperature: cfg.temperature,
        refresh_rounds: cfg.refresh_rounds,
        student_dim: cfg.student_dim,
        seed: cfg.seed,
        teacher_accuracy,
        student_pretrain_accuracy,
        primary,
        unit_baseline,
    })
}

/// Convenience wrapper running [`run_distillation`] on a mixture task.
pub fn run_distillation_on_task(task: &MixtureTask, cfg: &DistillConfig) -> Result<DistillReport> {
    run_distillation(&task.labeled, &task.unlabeled, &task.validation, &task.test, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{synthetic_mixture_task, MixtureSpec};
    use crate::optimize::{SamplingMode, StepSchedule};

    fn sgd(iterations: usize, scale: f64) -> SgdConfig {
        SgdConfig {
            iterations,
            step: StepSchedule::Constant { scale },
            constraint_radius: 1.0,
            seed: 0,
            sampling: SamplingMode::WithReplacement,
            log_every: None,
        }
    }

    fn quick_config(scheme: WeightScheme, seed: u64) -> DistillConfig {
        DistillConfig {
            student_dim: 6,
            label_mode: LabelMode::Soft,
            refresh_rounds: 1,
            weight_scheme: scheme,
            metric: ConfidenceMetric::Margin,
            temperature: 1.0,
            seed,
            teacher_sgd: sgd(1500, 2.0),
            pretrain_sgd: sgd(800, 2.0),
            distill_sgd: sgd(1500, 2.0),
            log_every: 250,
        }
    }

    fn quick_task(seed: u64) -> MixtureTask {
        synthetic_mixture_task(&MixtureSpec {
            dim: 10,
            num_classes: 3,
            n_labeled: 60,
            n_unlabeled: 300,
            n_validation: 120,
            n_test: 800,
            separation: 2.5,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn teacher_on_separable_clusters_is_accurate() {
        let task = synthetic_mixture_task(&MixtureSpec {
            dim: 4,
            num_classes: 2,
            n_labeled: 200,
            n_unlabeled: 10,
            n_validation: 10,
            n_test: 500,
            separation: 1e3,
            seed: 3,
        })
        .unwrap();
        let teacher =
            train_teacher(&task.labeled, &sgd(2000, 2.0), &LossSpec::cross_entropy(), 5).unwrap();
        let acc = teacher.accuracy(&task.labeled).unwrap();
        assert!(acc >= 0.99, "teacher train accuracy {acc}");
    }

    #[test]
    fn teacher_training_is_deterministic() {
        let task = quick_task(4);
        let spec = LossSpec::cross_entropy();
        let a = train_teacher(&task.labeled, &sgd(500, 2.0), &spec, 9).unwrap();
        let b = train_teacher(&task.labeled, &sgd(500, 2.0), &spec, 9).unwrap();
        assert_eq!(a.theta(), b.theta());
    }

    #[test]
    fn teacher_accuracy_grows_with_labeled_data() {
        // Monotone over 5-seed means for |S_l| in {250, 1000, 4000}.
        let sizes = [250usize, 1000, 4000];
        let mut means = Vec::new();
        for &n in &sizes {
            let mut acc = 0.0;
            for seed in 0..5u64 {
                let task = synthetic_mixture_task(&MixtureSpec {
                    dim: 8,
                    num_classes: 4,
                    n_labeled: n,
                    n_unlabeled: 10,
                    n_validation: 10,
                    n_test: 2000,
                    separation: 1.8,
                    seed: 100 + seed,
                })
                .unwrap();
                let teacher = train_teacher(
                    &task.labeled,
                    &sgd(3000, 2.0),
                    &LossSpec::cross_entropy(),
                    seed,
                )
                .unwrap();
                acc += teacher.accuracy(&task.test).unwrap();
            }
            means.push(acc / 5.0);
        }
        assert!(
            means[0] <= means[1] + 1e-9 && means[1] <= means[2] + 1e-9,
            "means not monotone: {means:?}"
        );
    }

    #[test]
    fn hard_labels_are_one_hot_and_match_accuracy() {
        let task = quick_task(11);
        let spec = LossSpec::cross_entropy();
        let teacher = train_teacher(&task.labeled, &sgd(1500, 2.0), &spec, 7).unwrap();
        let labeled_pool =
            teacher_label(&teacher, &task.unlabeled, LabelMode::Hard, 1.0).unwrap();
        assert!(labeled_pool.examples().iter().all(|ex| ex.label.is_one_hot()));

        // Agreement between hard labels and ground truth equals teacher
        // accuracy on the pool by definition; check on a sizable pool.
        let agreement = labeled_pool
            .examples()
            .iter()
            .filter(|ex| task.ground_truth_class(&ex.features) == ex.label.top_class())
            .count() as f64
            / labeled_pool.len() as f64;
        let direct = labeled_pool
            .examples()
            .iter()
            .filter(|ex| teacher.classify(&ex.features) == task.ground_truth_class(&ex.features))
            .count() as f64
            / labeled_pool.len() as f64;
        assert!((agreement - direct).abs() < 1e-12);
    }

    #[test]
    fn soft_labels_at_zero_logits_are_uniform() {
        let teacher = LinearParams::zeros(3, 4);
        let pool = Dataset::unlabeled(vec![vec![0.5, -0.5, 1.0, 0.0]], 3, 0).unwrap();
        let labeled = teacher_label(&teacher, &pool, LabelMode::Soft, 1.0).unwrap();
        for p in labeled.examples()[0].label.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn feature_map_is_a_linear_truncation() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(student_feature_map(&x, 4), x);
        assert_eq!(student_feature_map(&x, 2), vec![1.0, 2.0]);
        // Linearity: map(a x + b y) = a map(x) + b map(y).
        let y = [0.5, -1.0, 2.0, 0.0];
        let combo: Vec<f64> = x.iter().zip(y).map(|(a, b)| 2.0 * a + 3.0 * b).collect();
        let lhs = student_feature_map(&combo, 2);
        let rhs: Vec<f64> = student_feature_map(&x, 2)
            .iter()
            .zip(student_feature_map(&y, 2))
            .map(|(a, b)| 2.0 * a + 3.0 * b)
            .collect();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn truncated_student_is_weaker_than_teacher() {
        let mut teacher_wins = 0;
        for seed in 0..5u64 {
            let task = quick_task(40 + seed);
            let spec = LossSpec::cross_entropy();
            let teacher = train_teacher(&task.labeled, &sgd(1500, 2.0), &spec, seed).unwrap();
            let student_data = truncate_dataset(&task.labeled, 4).unwrap();
            let student = train_teacher(&student_data, &sgd(1500, 2.0), &spec, seed).unwrap();
            let test_student = truncate_dataset(&task.test, 4).unwrap();
            if teacher.accuracy(&task.test).unwrap() > student.accuracy(&test_student).unwrap() {
                teacher_wins += 1;
            }
        }
        assert!(teacher_wins >= 4, "teacher won only {teacher_wins}/5");
    }

    #[test]
    fn unit_scheme_report_is_its_own_baseline() {
        let task = quick_task(21);
        let report = run_distillation_on_task(&task, &quick_config(WeightScheme::Unit, 5)).unwrap();
        assert_eq!(report.primary.final_accuracy, report.unit_baseline.final_accuracy);
        assert_eq!(report.primary.trajectory, report.unit_baseline.trajectory);
    }

    #[test]
    fn reports_are_reproducible() {
        let task = quick_task(22);
        let cfg = quick_config(WeightScheme::Ours, 6);
        let a = run_distillation_on_task(&task, &cfg).unwrap();
        let b = run_distillation_on_task(&task, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn refreshes_match_the_configured_rounds() {
        let task = quick_task(23);
        let mut cfg = quick_config(WeightScheme::Ours, 7);
        cfg.refresh_rounds = 3;
        cfg.distill_sgd = sgd(400, 2.0);
        let report = run_distillation_on_task(&task, &cfg).unwrap();
        assert_eq!(report.primary.weight_refreshes, 3);
        assert!(report
            .primary
            .unlabeled_weights
            .iter()
            .all(|w| (0.0..=1.0).contains(w)));
    }

    #[test]
    fn composition_weights_stay_in_range() {
        let task = quick_task(24);
        let report =
            run_distillation_on_task(&task, &quick_config(WeightScheme::Composition, 8)).unwrap();
        assert!(report
            .primary
            .unlabeled_weights
            .iter()
            .all(|w| (0.0..=1.0).contains(w)));
        assert!(report.primary.unlabeled_records.is_some());
    }

    #[test]
    fn overlapping_splits_are_rejected() {
        let task = quick_task(25);
        let err = run_distillation(
            &task.labeled,
            &task.unlabeled,
            &task.labeled, // validation aliases the labeled split
            &task.test,
            &quick_config(WeightScheme::Ours, 9),
        );
        assert!(matches!(err, Err(CoreError::OverlappingSplits { .. })));
    }

    #[test]
    fn perfect_teacher_makes_schemes_agree() {
        // A very separable task: the teacher labels everything right,
        // Alg. 2 answers (0, 1) everywhere, weights are all 1 and the
        // weighted run coincides with the unit run.
        let task = synthetic_mixture_task(&MixtureSpec {
            dim: 6,
            num_classes: 2,
            n_labeled: 150,
            n_unlabeled: 200,
            n_validation: 100,
            n_test: 400,
            separation: 1e3,
            seed: 26,
        })
        .unwrap();
        let mut cfg = quick_config(WeightScheme::Ours, 10);
        cfg.student_dim = 6;
        cfg.label_mode = LabelMode::Hard;
        let report = run_distillation_on_task(&task, &cfg).unwrap();
        assert!(report.teacher_accuracy >= 0.999);
        assert!(report
            .primary
            .unlabeled_weights
            .iter()
            .all(|w| (*w - 1.0).abs() < 1e-12));
        assert_eq!(
            report.primary.final_accuracy,
            report.unit_baseline.final_accuracy
        );
    }
}
