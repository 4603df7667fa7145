//! Debiasing reweighting for distillation with unlabeled examples.
//!
//! A teacher model that labels an unlabeled pool makes mistakes, and a
//! student trained on those labels inherits them. This crate treats the
//! teacher as a stochastic corruption process: each instance `x` keeps
//! its true label with probability `1 - p(x)` and receives an adversarial
//! label otherwise. Under that model the per-example weight
//!
//! ```text
//! w(x) = 1 / (1 + p(x) * (distortion(x) - 1))
//! ```
//!
//! makes the weighted empirical risk an unbiased estimator of the clean
//! risk, where `distortion(x)` is the ratio of the loss under the
//! corrupted label to the loss under the true label.
//!
//! The crate provides:
//!
//! - [`data`], [`loss`], [`linear`]: datasets, losses, confidence
//!   metrics, and linear softmax models with the three risk evaluators;
//! - [`noise`]: corruption models, samplers for the clean and noisy
//!   distributions, a two-halfspace sphere instance, and a Gaussian
//!   mixture task for desk-scale experiments;
//! - [`debias`]: the closed-form weights, the bias functional, the MSE
//!   crossover analysis, and regularity-constant bookkeeping;
//! - [`estimator`]: k-NN estimation of `(p, distortion)` from a
//!   validation set over (teacher confidence, student confidence)
//!   covariates, plus the entropy-based fidelity baseline;
//! - [`optimize`]: projected SGD (single-pass and multi-pass) on the
//!   reweighted objective with product-rule gradients;
//! - [`pipeline`]: the end-to-end distillation loop with paired
//!   weighted/unweighted runs.

pub mod data;
pub mod debias;
pub mod error;
pub mod estimator;
pub mod linear;
pub mod loss;
pub mod noise;
pub mod optimize;
pub mod pipeline;
pub mod reduce;
pub mod rng;

pub use data::{Dataset, Example, LabelVec, Split};
pub use error::{CoreError, Result};
pub use linear::LinearParams;
pub use loss::{LossKind, LossSpec};
