use crate::data::SparseVector;
use crate::error::{Error, Result};

/// Linear model `f(x) = w^T x + b` over `dim` features.
///
/// Coefficients are stored as one vector of length `dim + 1` whose last
/// coordinate is the offset `b`. Only the first `dim` coordinates are
/// regularized.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    coef: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(dim: usize) -> Self {
        ModelParams {
            coef: vec![0.0; dim + 1],
        }
    }

    pub fn new(weights: Vec<f64>, bias: f64) -> Result<Self> {
        let mut coef = weights;
        coef.push(bias);
        Self::from_coef(coef)
    }

    /// `coef` holds the weights followed by the offset.
    pub fn from_coef(coef: Vec<f64>) -> Result<Self> {
        if coef.is_empty() {
            return Err(Error::InvalidData("coefficient vector is empty".into()));
        }
        if coef.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numerical("model has non-finite coefficients".into()));
        }
        Ok(ModelParams { coef })
    }

    pub fn dim(&self) -> usize {
        self.coef.len() - 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.coef[..self.dim()]
    }

    pub fn bias(&self) -> f64 {
        self.coef[self.dim()]
    }

    pub fn coef(&self) -> &[f64] {
        &self.coef
    }

    pub fn into_coef(self) -> Vec<f64> {
        self.coef
    }

    /// `||w||^2` without the offset.
    pub fn penalized_sq_norm(&self) -> f64 {
        self.weights().iter().map(|w| w * w).sum()
    }

    /// Decision value `w^T x + b`.
    pub fn decision(&self, x: &SparseVector) -> Result<f64> {
        if x.end() > self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: x.end(),
            });
        }
        Ok(x.dot(&self.coef) + self.bias())
    }

    /// Predicted label in {-1, +1}; a score of exactly zero predicts +1.
    pub fn predict(&self, x: &SparseVector) -> Result<f64> {
        Ok(if self.decision(x)? >= 0.0 { 1.0 } else { -1.0 })
    }

    pub fn negated(&self) -> ModelParams {
        ModelParams {
            coef: self.coef.iter().map(|c| -c).collect(),
        }
    }

    /// Re-expresses a model trained on features multiplied by `scales` so it
    /// applies to the unscaled features.
    pub fn unscale(&self, scales: &[f64]) -> Result<ModelParams> {
        if scales.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: scales.len(),
            });
        }
        let mut coef: Vec<f64> = self.weights().iter().zip(scales).map(|(w, s)| w * s).collect();
        coef.push(self.bias());
        Ok(ModelParams { coef })
    }
}
