//! Linear multiclass model `f(x) = Theta * x` with a Frobenius-ball
//! parameter constraint.

use crate::data::{argmax, Dataset, LabelVec};
use crate::error::{CoreError, Result};
use crate::loss::softmax;
use ndarray::Array2;

/// An `L x d` parameter matrix constrained to a Frobenius ball.
///
/// The projection itself lives in [`crate::optimize::project_frobenius`];
/// the invariant maintained there is `frobenius_norm <= radius + 1e-12`
/// after every projected update.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    theta: Array2<f64>,
    constraint_radius: f64,
}

impl LinearParams {
    /// Zero matrix, the starting point of every SGD run.
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            theta: Array2::zeros((num_classes, dim)),
            constraint_radius: 1.0,
        }
    }

    pub fn from_matrix(theta: Array2<f64>, constraint_radius: f64) -> Result<Self> {
        if !(constraint_radius > 0.0) {
            return Err(CoreError::InvalidInput(
                "constraint radius must be positive".into(),
            ));
        }
        if theta.nrows() < 2 || theta.ncols() < 1 {
            return Err(CoreError::InvalidInput(
                "parameter matrix must be at least 2 x 1".into(),
            ));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidInput(
                "non-finite parameter value".into(),
            ));
        }
        Ok(Self {
            theta,
            constraint_radius,
        })
    }

    pub fn with_radius(mut self, constraint_radius: f64) -> Result<Self> {
        if !(constraint_radius > 0.0) {
            return Err(CoreError::InvalidInput(
                "constraint radius must be positive".into(),
            ));
        }
        self.constraint_radius = constraint_radius;
        Ok(self)
    }

    pub fn theta(&self) -> &Array2<f64> {
        &self.theta
    }

    pub(crate) fn theta_mut(&mut self) -> &mut Array2<f64> {
        &mut self.theta
    }

    pub fn constraint_radius(&self) -> f64 {
        self.constraint_radius
    }

    pub fn num_classes(&self) -> usize {
        self.theta.nrows()
    }

    pub fn dim(&self) -> usize {
        self.theta.ncols()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.theta.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `Theta * x` as a plain vector. Row-major loop, deterministic.
    pub fn logits(&self, features: &[f64]) -> Vec<f64> {
        debug_assert_eq!(features.len(), self.dim());
        self.theta
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(features).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Softmax prediction at the given temperature.
    pub fn predict(&self, features: &[f64], temperature: f64) -> Result<LabelVec> {
        softmax(&self.logits(features), temperature)
    }

    /// Predicted class: argmax of the logits (ties to the lowest index).
    pub fn classify(&self, features: &[f64]) -> usize {
        argmax(&self.logits(features))
    }

    /// Fraction of examples whose predicted class matches the label's
    /// top class.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        data.require_labels()?;
        let correct = data
            .examples()
            .iter()
            .filter(|ex| self.classify(&ex.features) == ex.label.top_class())
            .count();
        Ok(correct as f64 / data.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn logits_are_a_plain_matvec() {
        let m = LinearParams::from_matrix(array![[1.0, 2.0], [0.0, -1.0]], 1.0).unwrap();
        assert_eq!(m.logits(&[3.0, 4.0]), vec![11.0, -4.0]);
    }

    #[test]
    fn frobenius_norm_matches_hand_value() {
        let m = LinearParams::from_matrix(array![[3.0, 0.0], [0.0, 4.0]], 1.0).unwrap();
        assert!((m.frobenius_norm() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(LinearParams::from_matrix(array![[1.0, 2.0]], 1.0).is_err());
        assert!(LinearParams::from_matrix(array![[1.0], [f64::NAN]], 1.0).is_err());
        assert!(LinearParams::from_matrix(array![[1.0], [2.0]], 0.0).is_err());
    }
}
