//! Error type shared by all modules.

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("non-finite logits")]
    NonFiniteLogits,
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("label vector needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("label vector must be non-negative and sum to 1, got sum {sum}")]
    InvalidDistribution { sum: f64 },
    #[error("class index {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("sample count must be at least 1")]
    EmptySample,
    #[error("dataset labels are placeholders; run a teacher over them first")]
    PlaceholderLabels,
    #[error("weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("zero clean loss: distortion undefined")]
    ZeroCleanLoss,
    #[error("degenerate weight: 1 + p(distortion - 1) = {denominator}")]
    DegenerateWeight { denominator: f64 },
    #[error("noise level must lie in (0, 1), got {0}")]
    NoiseLevelOutOfRange(f64),
    #[error("exact expectation needs a discrete-support sampler; supply a Monte Carlo budget instead")]
    ExactModeNeedsDiscreteSupport,
    #[error("splits must be disjoint: feature row {index} appears in both {first} and {second}")]
    OverlappingSplits {
        index: usize,
        first: &'static str,
        second: &'static str,
    },
    #[error("{0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
