//! Teacher-noise models and synthetic tasks.
//!
//! A [`NoiseModel`] bundles a ground-truth classifier, a corruption
//! probability `p(x)`, an adversarial label `y_adv(x)`, and a feature
//! sampler. Clean draws pair `x` with its true label; noisy draws flip a
//! coin and substitute the adversarial label with probability `p(x)`.
//! Both samplers consume the same per-index random stream, drawing `x`
//! before the coin, so clean and noisy datasets built from the same seed
//! share their feature vectors exactly (the x-marginals agree by
//! construction, not just in distribution).

use crate::data::{Dataset, Example, LabelVec, Split};
use crate::error::{CoreError, Result};
use crate::rng::stream;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

pub type ClassifyFn = Arc<dyn Fn(&[f64]) -> usize + Send + Sync>;
pub type CorruptProbFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type AdversarialLabelFn = Arc<dyn Fn(&[f64]) -> LabelVec + Send + Sync>;

/// Distribution of feature vectors.
#[derive(Clone)]
pub enum FeatureSampler {
    /// Finite support with explicit masses; enables exact expectations.
    Discrete {
        points: Vec<Vec<f64>>,
        masses: Vec<f64>,
    },
    /// Uniform on the sphere of the given radius.
    Sphere { dim: usize, radius: f64 },
}

impl FeatureSampler {
    pub fn discrete(points: Vec<Vec<f64>>, masses: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != masses.len() {
            return Err(CoreError::InvalidInput(
                "discrete sampler needs matching, non-empty points and masses".into(),
            ));
        }
        let total: f64 = masses.iter().sum();
        if masses.iter().any(|m| *m < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(CoreError::InvalidInput(format!(
                "discrete masses must be non-negative and sum to 1, got {total}"
            )));
        }
        Ok(Self::Discrete { points, masses })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Discrete { points, .. } => points[0].len(),
            Self::Sphere { dim, .. } => *dim,
        }
    }

    /// Finite support, if this sampler has one.
    pub fn support(&self) -> Option<(&[Vec<f64>], &[f64])> {
        match self {
            Self::Discrete { points, masses } => Some((points, masses)),
            Self::Sphere { .. } => None,
        }
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            Self::Discrete { points, masses } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (point, mass) in points.iter().zip(masses) {
                    acc += mass;
                    if u < acc {
                        return point.clone();
                    }
                }
                points.last().expect("non-empty support").clone()
            }
            Self::Sphere { dim, radius } => loop {
                let v: Vec<f64> = (0..*dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    return v.into_iter().map(|x| x * radius / norm).collect();
                }
            },
        }
    }
}

/// Ground truth plus a stochastic label corrupter; defines the clean
/// distribution and the induced noisy one over the same x-marginal.
#[derive(Clone)]
pub struct NoiseModel {
    ground_truth: ClassifyFn,
    corrupt_prob: CorruptProbFn,
    adversarial_label: AdversarialLabelFn,
    sampler: FeatureSampler,
    num_classes: usize,
}

impl NoiseModel {
    pub fn new(
        ground_truth: ClassifyFn,
        corrupt_prob: CorruptProbFn,
        adversarial_label: AdversarialLabelFn,
        sampler: FeatureSampler,
        num_classes: usize,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(CoreError::TooFewClasses(num_classes));
        }
        Ok(Self {
            ground_truth,
            corrupt_prob,
            adversarial_label,
            sampler,
            num_classes,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.sampler.dim()
    }

    pub fn sampler(&self) -> &FeatureSampler {
        &self.sampler
    }

    pub fn ground_truth_class(&self, x: &[f64]) -> usize {
        (self.ground_truth)(x)
    }

    pub fn ground_truth_label(&self, x: &[f64]) -> LabelVec {
        LabelVec::one_hot(self.ground_truth_class(x), self.num_classes)
            .expect("ground truth class in range")
    }

    pub fn corrupt_prob(&self, x: &[f64]) -> f64 {
        (self.corrupt_prob)(x)
    }

    pub fn adversarial_label(&self, x: &[f64]) -> LabelVec {
        (self.adversarial_label)(x)
    }

    /// Twin model with the corruption switched off; its noisy draws
    /// coincide with the clean ones coin-for-coin.
    pub fn clean_twin(&self) -> NoiseModel {
        NoiseModel {
            ground_truth: Arc::clone(&self.ground_truth),
            corrupt_prob: Arc::new(|_| 0.0),
            adversarial_label: Arc::clone(&self.adversarial_label),
            sampler: self.sampler.clone(),
            num_classes: self.num_classes,
        }
    }

    /// One clean draw from the given stream: `x`, then a coin that is
    /// discarded. The coin keeps the stream aligned with
    /// [`Self::draw_noisy`] so paired runs see identical features.
    pub fn draw_clean(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, LabelVec) {
        let x = self.sampler.draw(rng);
        let _coin: f64 = rng.random();
        let label = self.ground_truth_label(&x);
        (x, label)
    }

    /// One noisy draw: `x`, then a coin; the adversarial label wins with
    /// probability `p(x)`.
    pub fn draw_noisy(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, LabelVec) {
        let x = self.sampler.draw(rng);
        let coin: f64 = rng.random();
        let label = if coin < self.corrupt_prob(&x) {
            self.adversarial_label(&x)
        } else {
            self.ground_truth_label(&x)
        };
        (x, label)
    }

    /// `n` i.i.d. clean examples; example `i` uses stream `(seed, i)`.
    pub fn sample_clean(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(CoreError::EmptySample);
        }
        let examples = (0..n)
            .map(|i| {
                let (x, label) = self.draw_clean(&mut stream(seed, i as u64));
                Example::new(x, label)
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(examples, Split::Labeled, seed)
    }

    /// `n` i.i.d. noisy examples; example `i` uses stream `(seed, i)`.
    pub fn sample_noisy(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(CoreError::EmptySample);
        }
        let examples = (0..n)
            .map(|i| {
                let (x, label) = self.draw_noisy(&mut stream(seed, i as u64));
                Example::new(x, label)
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(examples, Split::Labeled, seed)
    }
}

/// Two-halfspace instance on a sphere: the true labeler is
/// `sign(theta_star . x)` and the adversary answers with
/// `sign(theta_tilde . x)`, where the two unit vectors meet at angle
/// `pi * noise_level`. The disagreement set is a wedge of probability
/// exactly `noise_level`.
#[derive(Debug, Clone)]
pub struct SphereInstance {
    pub dim: usize,
    pub noise_level: f64,
    pub radius: f64,
    pub theta_star: Vec<f64>,
    pub theta_tilde: Vec<f64>,
}

/// `sign` with ties resolved to +1, mapped to classes {+1 -> 0, -1 -> 1}.
fn halfspace_class(direction: &[f64], x: &[f64]) -> usize {
    let dot: f64 = direction.iter().zip(x).map(|(a, b)| a * b).sum();
    if dot >= 0.0 {
        0
    } else {
        1
    }
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Build the sphere instance for noise level `c`, with default radius
/// `ceil(sqrt(d) / c)`.
///
/// The model's corruption probability is the indicator of the wedge
/// where the two halfspaces disagree, so `E[p(x)] = c` and the noisy
/// labels are exactly `sign(theta_tilde . x)` everywhere.
pub fn make_sphere_instance(
    dim: usize,
    noise_level: f64,
    seed: u64,
) -> Result<(SphereInstance, NoiseModel)> {
    if dim < 2 {
        return Err(CoreError::InvalidInput(
            "sphere instance needs dimension >= 2".into(),
        ));
    }
    if !(noise_level > 0.0 && noise_level < 1.0) {
        return Err(CoreError::NoiseLevelOutOfRange(noise_level));
    }
    let mut rng = stream(seed, 0);
    let theta_star = random_unit(dim, &mut rng);
    // Orthonormal companion via Gram-Schmidt; retry if nearly parallel.
    let ortho = loop {
        let candidate = random_unit(dim, &mut rng);
        let dot: f64 = candidate.iter().zip(&theta_star).map(|(a, b)| a * b).sum();
        let v: Vec<f64> = candidate
            .iter()
            .zip(&theta_star)
            .map(|(c, s)| c - dot * s)
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            break v.into_iter().map(|x| x / norm).collect::<Vec<f64>>();
        }
    };
    let phi = std::f64::consts::PI * noise_level;
    let theta_tilde: Vec<f64> = theta_star
        .iter()
        .zip(&ortho)
        .map(|(s, o)| phi.cos() * s + phi.sin() * o)
        .collect();
    let radius = ((dim as f64).sqrt() / noise_level).ceil();

    let instance = SphereInstance {
        dim,
        noise_level,
        radius,
        theta_star: theta_star.clone(),
        theta_tilde: theta_tilde.clone(),
    };

    let gt_dir = theta_star.clone();
    let adv_dir = theta_tilde.clone();
    let wedge_star = theta_star;
    let wedge_tilde = theta_tilde;
    let model = NoiseModel::new(
        Arc::new(move |x: &[f64]| halfspace_class(&gt_dir, x)),
        Arc::new(move |x: &[f64]| {
            if halfspace_class(&wedge_star, x) != halfspace_class(&wedge_tilde, x) {
                1.0
            } else {
                0.0
            }
        }),
        Arc::new(move |x: &[f64]| {
            LabelVec::one_hot(halfspace_class(&adv_dir, x), 2).expect("binary label")
        }),
        FeatureSampler::Sphere { dim, radius },
        2,
    )?;
    Ok((instance, model))
}

/// Gaussian mixture classification task: four disjoint splits plus the
/// generating cluster means, which define the (linear) ground truth.
#[derive(Debug, Clone)]
pub struct MixtureTask {
    pub labeled: Dataset,
    pub unlabeled: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    means: Vec<Vec<f64>>,
    separation: f64,
}

impl MixtureTask {
    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn separation(&self) -> f64 {
        self.separation
    }

    /// Nearest cluster mean. All means share a norm, so this equals the
    /// argmax of the linear scores `mean_k . x`.
    pub fn ground_truth_class(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (k, mean) in self.means.iter().enumerate() {
            let dist: f64 = mean
                .iter()
                .zip(x)
                .map(|(m, v)| (m - v) * (m - v))
                .sum::<f64>();
            if dist < best_dist {
                best_dist = dist;
                best = k;
            }
        }
        best
    }

    /// Bayes-optimal linear model: one row per cluster mean direction.
    pub fn bayes_model(&self) -> crate::linear::LinearParams {
        let l = self.means.len();
        let d = self.means[0].len();
        let mut theta = ndarray::Array2::zeros((l, d));
        for (k, mean) in self.means.iter().enumerate() {
            for (j, v) in mean.iter().enumerate() {
                theta[[k, j]] = *v;
            }
        }
        let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            theta.mapv_inplace(|v| v / norm);
        }
        crate::linear::LinearParams::from_matrix(theta, 1.0).expect("valid matrix")
    }

    /// True labels for an arbitrary feature list (used to score weights
    /// against teacher correctness in experiments).
    pub fn ground_truth_labels(&self, features: &[Vec<f64>]) -> Vec<usize> {
        features.iter().map(|x| self.ground_truth_class(x)).collect()
    }
}

/// Parameters for [`synthetic_mixture_task`].
#[derive(Debug, Clone)]
pub struct MixtureSpec {
    pub dim: usize,
    pub num_classes: usize,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub separation: f64,
    pub seed: u64,
}

/// Sample a mixture of `L` unit-variance Gaussian clusters whose means
/// sit at distance `separation` from the origin along random
/// orthonormal directions. Splits are carved from disjoint index ranges
/// of one counter-based stream, so they are disjoint and each split is
/// reproducible on its own.
///
/// Cluster means deliberately spread across all coordinates (random
/// directions, not axes), so truncating late features costs accuracy:
/// that is what separates teacher from student downstream.
pub fn synthetic_mixture_task(spec: &MixtureSpec) -> Result<MixtureTask> {
    if spec.num_classes < 2 {
        return Err(CoreError::TooFewClasses(spec.num_classes));
    }
    if spec.num_classes > spec.dim {
        return Err(CoreError::InvalidInput(format!(
            "need dim >= classes for orthonormal means, got {} < {}",
            spec.dim, spec.num_classes
        )));
    }
    if spec.separation < 0.0 {
        return Err(CoreError::InvalidInput(
            "separation must be non-negative".into(),
        ));
    }
    for (name, n) in [
        ("n_labeled", spec.n_labeled),
        ("n_unlabeled", spec.n_unlabeled),
        ("n_validation", spec.n_validation),
        ("n_test", spec.n_test),
    ] {
        if n == 0 {
            return Err(CoreError::InvalidInput(format!("{name} must be >= 1")));
        }
    }

    // Orthonormal mean directions via Gram-Schmidt on seeded Gaussians.
    let mut rng = stream(spec.seed, u64::MAX);
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(spec.num_classes);
    while dirs.len() < spec.num_classes {
        let mut v = random_unit(spec.dim, &mut rng);
        for existing in &dirs {
            let dot: f64 = v.iter().zip(existing).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(existing).for_each(|(vi, ei)| *vi -= dot * ei);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            dirs.push(v);
        }
    }
    let means: Vec<Vec<f64>> = dirs
        .iter()
        .map(|d| d.iter().map(|v| v * spec.separation).collect())
        .collect();

    let draw_range = |start: usize, count: usize, split: Split| -> Result<Dataset> {
        let examples = (start..start + count)
            .map(|i| {
                let mut rng = stream(spec.seed, i as u64);
                let class = (rng.random::<u64>() % spec.num_classes as u64) as usize;
                let x: Vec<f64> = means[class]
                    .iter()
                    .map(|m| m + rng.sample::<f64, _>(StandardNormal))
                    .collect();
                // Label by nearest mean, not by the generating class:
                // with small separation the generating class is not the
                // ground truth. Distance ties (all of them, when the
                // separation is zero) keep the generating class.
                let mut best = class;
                let mut best_dist: f64 = means[class]
                    .iter()
                    .zip(&x)
                    .map(|(m, v)| (m - v) * (m - v))
                    .sum();
                for (k, mean) in means.iter().enumerate() {
                    let dist: f64 =
                        mean.iter().zip(&x).map(|(m, v)| (m - v) * (m - v)).sum::<f64>();
                    if dist < best_dist {
                        best_dist = dist;
                        best = k;
                    }
                }
                Example::new(x, LabelVec::one_hot(best, spec.num_classes)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(examples, split, spec.seed)
    };

    let labeled = draw_range(0, spec.n_labeled, Split::Labeled)?;
    let validation = draw_range(spec.n_labeled, spec.n_validation, Split::Validation)?;
    let test = draw_range(
        spec.n_labeled + spec.n_validation,
        spec.n_test,
        Split::Test,
    )?;
    let labeled_unlabeled_start = spec.n_labeled + spec.n_validation + spec.n_test;
    let unlabeled_full = draw_range(labeled_unlabeled_start, spec.n_unlabeled, Split::Unlabeled)?;
    // The unlabeled pool ships with placeholder labels; ground truth
    // stays only inside MixtureTask for evaluation.
    let unlabeled = Dataset::unlabeled(
        unlabeled_full
            .examples()
            .iter()
            .map(|ex| ex.features.clone())
            .collect(),
        spec.num_classes,
        spec.seed,
    )?;

    Ok(MixtureTask {
        labeled,
        unlabeled,
        validation,
        test,
        means,
        separation: spec.separation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn constant_noise_model(p: f64) -> NoiseModel {
        NoiseModel::new(
            Arc::new(|x: &[f64]| if x[0] >= 0.0 { 0 } else { 1 }),
            Arc::new(move |_: &[f64]| p),
            Arc::new(|x: &[f64]| {
                LabelVec::one_hot(if x[0] >= 0.0 { 1 } else { 0 }, 2).unwrap()
            }),
            FeatureSampler::discrete(vec![vec![1.0], vec![-1.0]], vec![0.5, 0.5]).unwrap(),
            2,
        )
        .unwrap()
    }

    #[test]
    fn zero_corruption_matches_clean_sampling() {
        let nm = constant_noise_model(0.0);
        let clean = nm.sample_clean(200, 7).unwrap();
        let noisy = nm.sample_noisy(200, 7).unwrap();
        assert_eq!(clean, noisy);
    }

    #[test]
    fn empty_sample_is_an_error() {
        let nm = constant_noise_model(0.0);
        assert!(matches!(nm.sample_clean(0, 1), Err(CoreError::EmptySample)));
        assert!(matches!(nm.sample_noisy(0, 1), Err(CoreError::EmptySample)));
    }

    #[test]
    fn symmetric_two_class_frequencies_balance() {
        let nm = constant_noise_model(0.0);
        let data = nm.sample_clean(100_000, 3).unwrap();
        let class0 = data
            .examples()
            .iter()
            .filter(|ex| ex.label.top_class() == 0)
            .count() as f64
            / data.len() as f64;
        assert!((class0 - 0.5).abs() < 0.01, "class balance {class0}");
    }

    #[test]
    fn full_corruption_always_uses_adversarial_labels() {
        let nm = constant_noise_model(1.0);
        let data = nm.sample_noisy(500, 11).unwrap();
        for ex in data.examples() {
            let adv = nm.adversarial_label(&ex.features);
            assert_eq!(ex.label, adv);
        }
    }

    #[test]
    fn constant_corruption_rate_concentrates() {
        let nm = constant_noise_model(0.3);
        let data = nm.sample_noisy(100_000, 5).unwrap();
        let corrupted = data
            .examples()
            .iter()
            .filter(|ex| ex.label != nm.ground_truth_label(&ex.features))
            .count() as f64
            / data.len() as f64;
        assert!((corrupted - 0.3).abs() < 0.01, "corruption rate {corrupted}");
    }

    #[test]
    fn corruption_rate_converges_at_root_n() {
        let nm = constant_noise_model(0.3);
        for n in [1_000usize, 10_000, 100_000] {
            let data = nm.sample_noisy(n, 13).unwrap();
            let corrupted = data
                .examples()
                .iter()
                .filter(|ex| ex.label != nm.ground_truth_label(&ex.features))
                .count() as f64
                / n as f64;
            assert!(
                (corrupted - 0.3).abs() <= 3.0 / (n as f64).sqrt(),
                "n={n} rate={corrupted}"
            );
        }
    }

    #[test]
    fn clean_and_noisy_share_feature_draws() {
        let nm = constant_noise_model(0.5);
        let clean = nm.sample_clean(300, 17).unwrap();
        let noisy = nm.sample_noisy(300, 17).unwrap();
        for (a, b) in clean.examples().iter().zip(noisy.examples()) {
            assert_eq!(a.features, b.features);
        }
    }

    #[test]
    fn sphere_instance_geometry() {
        let (inst, nm) = make_sphere_instance(10, 0.2, 42).unwrap();
        assert_eq!(inst.radius, 16.0); // ceil(sqrt(10) / 0.2)
        let norm_star: f64 = inst.theta_star.iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm_tilde: f64 = inst.theta_tilde.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_abs_diff_eq!(norm_star, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(norm_tilde, 1.0, epsilon = 1e-12);
        let cos_angle: f64 = inst
            .theta_star
            .iter()
            .zip(&inst.theta_tilde)
            .map(|(a, b)| a * b)
            .sum();
        let angle = cos_angle.clamp(-1.0, 1.0).acos();
        assert_abs_diff_eq!(angle, std::f64::consts::PI * 0.2, epsilon = 1e-9);

        // Every sample sits on the sphere.
        let data = nm.sample_clean(100, 1).unwrap();
        for ex in data.examples() {
            let norm: f64 = ex.features.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert_abs_diff_eq!(norm, inst.radius, epsilon = 1e-9);
        }
    }

    #[test]
    fn sphere_orthogonal_at_half_noise() {
        let (inst, _) = make_sphere_instance(6, 0.5, 9).unwrap();
        let dot: f64 = inst
            .theta_star
            .iter()
            .zip(&inst.theta_tilde)
            .map(|(a, b)| a * b)
            .sum();
        assert!(dot.abs() < 1e-9);
    }

    #[test]
    fn sphere_disagreement_matches_angle_fraction() {
        // Wedge probability equals phi / pi = noise level.
        let (_, nm) = make_sphere_instance(10, 0.2, 23).unwrap();
        let data = nm.sample_clean(100_000, 2).unwrap();
        let disagree = data
            .examples()
            .iter()
            .filter(|ex| {
                nm.adversarial_label(&ex.features).top_class()
                    != nm.ground_truth_class(&ex.features)
            })
            .count() as f64
            / data.len() as f64;
        assert!((disagree - 0.2).abs() < 0.01, "disagreement {disagree}");
    }

    #[test]
    fn sphere_rejects_bad_noise_levels() {
        assert!(make_sphere_instance(4, 0.0, 1).is_err());
        assert!(make_sphere_instance(4, 1.0, 1).is_err());
        assert!(make_sphere_instance(1, 0.3, 1).is_err());
    }

    fn small_mixture(separation: f64, seed: u64) -> MixtureTask {
        synthetic_mixture_task(&MixtureSpec {
            dim: 4,
            num_classes: 2,
            n_labeled: 50,
            n_unlabeled: 50,
            n_validation: 50,
            n_test: 10_000,
            separation,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn well_separated_mixture_is_linearly_solvable() {
        let task = small_mixture(1e3, 5);
        let bayes = task.bayes_model();
        let acc = bayes.accuracy(&task.test).unwrap();
        assert!(acc >= 0.999, "bayes accuracy {acc}");
    }

    #[test]
    fn same_seed_reproduces_bit_identical_datasets() {
        let a = small_mixture(2.0, 8);
        let b = small_mixture(2.0, 8);
        assert_eq!(a.labeled, b.labeled);
        assert_eq!(a.unlabeled, b.unlabeled);
        assert_eq!(a.validation, b.validation);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn zero_separation_is_chance_level() {
        let task = synthetic_mixture_task(&MixtureSpec {
            dim: 6,
            num_classes: 4,
            n_labeled: 10,
            n_unlabeled: 10,
            n_validation: 10,
            n_test: 10_000,
            separation: 0.0,
            seed: 31,
        })
        .unwrap();
        // Any fixed classifier is at chance; use an arbitrary one.
        let mut theta = ndarray::Array2::zeros((4, 6));
        theta[[0, 0]] = 0.4;
        theta[[1, 1]] = -0.3;
        theta[[2, 2]] = 0.2;
        theta[[3, 3]] = 0.1;
        let model = crate::linear::LinearParams::from_matrix(theta, 1.0).unwrap();
        let acc = model.accuracy(&task.test).unwrap();
        assert!((acc - 0.25).abs() < 0.02, "chance-level accuracy {acc}");
    }

    #[test]
    fn mixture_splits_are_disjoint() {
        let task = small_mixture(2.0, 12);
        let key = |f: &[f64]| -> Vec<u64> { f.iter().map(|v| v.to_bits()).collect() };
        let mut seen = std::collections::HashSet::new();
        for ds in [&task.labeled, &task.validation, &task.test] {
            for ex in ds.examples() {
                assert!(seen.insert(key(&ex.features)), "duplicate feature row");
            }
        }
        for ex in task.unlabeled.examples() {
            assert!(seen.insert(key(&ex.features)), "duplicate feature row");
        }
    }
}
