//! Datasets: feature vectors with hard or soft label vectors and split tags.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

/// Tolerance for "sums to one" checks on label vectors.
pub const LABEL_SUM_TOL: f64 = 1e-9;

/// A probability vector over `L >= 2` classes.
///
/// Hard labels are stored as one-hot vectors so the hard and soft code
/// paths share every downstream operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelVec {
    probs: Vec<f64>,
}

impl LabelVec {
    /// Validate and wrap a soft label: non-negative entries summing to 1.
    pub fn soft(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(CoreError::TooFewClasses(probs.len()));
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > LABEL_SUM_TOL {
            return Err(CoreError::InvalidDistribution { sum });
        }
        Ok(Self { probs })
    }

    /// One-hot label at `class`.
    pub fn one_hot(class: usize, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(CoreError::TooFewClasses(num_classes));
        }
        if class >= num_classes {
            return Err(CoreError::ClassOutOfRange { class, num_classes });
        }
        let mut probs = vec![0.0; num_classes];
        probs[class] = 1.0;
        Ok(Self { probs })
    }

    /// Uniform distribution over `num_classes` classes.
    pub fn uniform(num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(CoreError::TooFewClasses(num_classes));
        }
        Ok(Self {
            probs: vec![1.0 / num_classes as f64; num_classes],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Index of the largest probability; ties resolve to the lowest index.
    pub fn top_class(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn is_one_hot(&self) -> bool {
        self.probs.iter().all(|&p| p == 0.0 || p == 1.0)
            && self.probs.iter().filter(|&&p| p == 1.0).count() == 1
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// One feature vector paired with its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: LabelVec,
}

impl Example {
    pub fn new(features: Vec<f64>, label: LabelVec) -> Result<Self> {
        if features.is_empty() {
            return Err(CoreError::InvalidInput(
                "feature vector must have dimension >= 1".into(),
            ));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidInput("non-finite feature value".into()));
        }
        Ok(Self { features, label })
    }
}

/// Role of a dataset in the distillation workflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Labeled,
    Unlabeled,
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Labeled => "labeled",
            Split::Unlabeled => "unlabeled",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

/// A list of examples sharing a feature dimension and class count.
///
/// Unlabeled pools carry uniform placeholder labels flagged invalid;
/// risk evaluators refuse to touch them until a teacher fills them in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    examples: Vec<Example>,
    split: Split,
    seed: u64,
    labels_valid: bool,
}

impl Dataset {
    /// Dataset with trusted labels.
    pub fn new(examples: Vec<Example>, split: Split, seed: u64) -> Result<Self> {
        Self::build(examples, split, seed, true)
    }

    /// Unlabeled pool: placeholder uniform labels, flagged invalid.
    pub fn unlabeled(features: Vec<Vec<f64>>, num_classes: usize, seed: u64) -> Result<Self> {
        let placeholder = LabelVec::uniform(num_classes)?;
        let examples = features
            .into_iter()
            .map(|f| Example::new(f, placeholder.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::build(examples, Split::Unlabeled, seed, false)
    }

    fn build(examples: Vec<Example>, split: Split, seed: u64, labels_valid: bool) -> Result<Self> {
        if examples.is_empty() {
            return Err(CoreError::EmptyDataset);
        }
        let dim = examples[0].features.len();
        let classes = examples[0].label.num_classes();
        for ex in &examples {
            if ex.features.len() != dim {
                return Err(CoreError::LengthMismatch {
                    expected: dim,
                    got: ex.features.len(),
                });
            }
            if ex.label.num_classes() != classes {
                return Err(CoreError::LengthMismatch {
                    expected: classes,
                    got: ex.label.num_classes(),
                });
            }
        }
        Ok(Self {
            examples,
            split,
            seed,
            labels_valid,
        })
    }

    /// Same examples, new labels. Marks labels valid.
    pub fn with_labels(&self, labels: Vec<LabelVec>) -> Result<Self> {
        if labels.len() != self.examples.len() {
            return Err(CoreError::LengthMismatch {
                expected: self.examples.len(),
                got: labels.len(),
            });
        }
        let examples = self
            .examples
            .iter()
            .zip(labels)
            .map(|(ex, label)| Example::new(ex.features.clone(), label))
            .collect::<Result<Vec<_>>>()?;
        Self::build(examples, self.split, self.seed, true)
    }

    /// Concatenate two compatible datasets (`a` first, then `b`).
    pub fn concat(a: &Dataset, b: &Dataset, split: Split, seed: u64) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(CoreError::LengthMismatch {
                expected: a.dim(),
                got: b.dim(),
            });
        }
        if a.num_classes() != b.num_classes() {
            return Err(CoreError::LengthMismatch {
                expected: a.num_classes(),
                got: b.num_classes(),
            });
        }
        let mut examples = a.examples.clone();
        examples.extend(b.examples.iter().cloned());
        Self::build(examples, split, seed, a.labels_valid && b.labels_valid)
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.examples[0].features.len()
    }

    pub fn num_classes(&self) -> usize {
        self.examples[0].label.num_classes()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn labels_valid(&self) -> bool {
        self.labels_valid
    }

    /// Error unless labels are trusted; used by risk evaluators.
    pub fn require_labels(&self) -> Result<()> {
        if self.labels_valid {
            Ok(())
        } else {
            Err(CoreError::PlaceholderLabels)
        }
    }
}
