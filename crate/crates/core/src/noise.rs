//! Unbiased feature-corrupting distributions `p(x~ | x)`.
//!
//! Every distribution here keeps `E[x~] = x`, so only the per-coordinate
//! variance is needed by the marginalized trainers. Dropout and Poisson act
//! on stored (present) features only; Gaussian and Laplace noise are additive
//! and touch every feature coordinate. The offset coordinate that trainers
//! append is never corrupted.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::data::SparseVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum NoiseSpec {
    #[default]
    None,
    /// Blankout: a feature is zeroed with probability `q`, otherwise scaled by `1/(1-q)`.
    Dropout { q: f64 },
    Gaussian { sigma2: f64 },
    Laplace { scale: f64 },
    /// `x~_d ~ Poisson(x_d)`; needs non-negative features.
    Poisson,
}

impl NoiseSpec {
    pub fn dropout(q: f64) -> Result<Self> {
        let spec = NoiseSpec::Dropout { q };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::None | NoiseSpec::Poisson => Ok(()),
            NoiseSpec::Dropout { q } => {
                if (0.0..1.0).contains(&q) {
                    Ok(())
                } else {
                    Err(Error::config("dropout level must be in [0,1)"))
                }
            }
            NoiseSpec::Gaussian { sigma2 } => {
                if sigma2.is_finite() && sigma2 >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::config("gaussian noise variance must be finite and >= 0"))
                }
            }
            NoiseSpec::Laplace { scale } => {
                if scale.is_finite() && scale > 0.0 {
                    Ok(())
                } else {
                    Err(Error::config("laplace noise scale must be finite and > 0"))
                }
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            NoiseSpec::None => "none",
            NoiseSpec::Dropout { .. } => "dropout",
            NoiseSpec::Gaussian { .. } => "gaussian",
            NoiseSpec::Laplace { .. } => "laplace",
            NoiseSpec::Poisson => "poisson",
        }
    }

    /// The distribution's single parameter, if it has one.
    pub fn level(&self) -> Option<f64> {
        match *self {
            NoiseSpec::Dropout { q } => Some(q),
            NoiseSpec::Gaussian { sigma2 } => Some(sigma2),
            NoiseSpec::Laplace { scale } => Some(scale),
            NoiseSpec::None | NoiseSpec::Poisson => None,
        }
    }

    /// Same kind with its parameter replaced; `None` becomes dropout and
    /// Poisson, which has no parameter, is returned unchanged.
    pub fn with_level(&self, level: f64) -> Result<Self> {
        let spec = match *self {
            NoiseSpec::None | NoiseSpec::Dropout { .. } => NoiseSpec::Dropout { q: level },
            NoiseSpec::Gaussian { .. } => NoiseSpec::Gaussian { sigma2: level },
            NoiseSpec::Laplace { .. } => NoiseSpec::Laplace { scale: level },
            NoiseSpec::Poisson => NoiseSpec::Poisson,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            NoiseSpec::None => write!(f, "none"),
            NoiseSpec::Dropout { q } => write!(f, "dropout(q={q})"),
            NoiseSpec::Gaussian { sigma2 } => write!(f, "gaussian(sigma2={sigma2})"),
            NoiseSpec::Laplace { scale } => write!(f, "laplace(scale={scale})"),
            NoiseSpec::Poisson => write!(f, "poisson"),
        }
    }
}

/// Diagonal of `V_p[x~]`: `uniform` on every feature coordinate, plus the
/// stored `sparse` terms. The offset coordinate always has variance zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarianceDiag {
    uniform: f64,
    sparse: SparseVector,
}

impl VarianceDiag {
    pub fn zero() -> Self {
        VarianceDiag::default()
    }

    pub fn new(uniform: f64, sparse: SparseVector) -> Result<Self> {
        if !(uniform.is_finite() && uniform >= 0.0) || sparse.iter().any(|(_, v)| v < 0.0) {
            return Err(Error::InvalidData("variances must be finite and >= 0".into()));
        }
        Ok(VarianceDiag { uniform, sparse })
    }

    pub fn uniform(&self) -> f64 {
        self.uniform
    }

    pub fn sparse(&self) -> &SparseVector {
        &self.sparse
    }

    pub fn is_zero(&self) -> bool {
        self.uniform == 0.0 && self.sparse.iter().all(|(_, v)| v == 0.0)
    }

    /// Variance of coordinate `d` in a `dim`-feature space (`d == dim` is the offset).
    pub fn at(&self, d: usize, dim: usize) -> f64 {
        if d >= dim {
            0.0
        } else {
            self.uniform + self.sparse.get(d)
        }
    }

    /// `sum_d V_d w_d^2`, given `penalized_sq_norm = sum_{d < dim} w_d^2`.
    #[inline]
    pub fn quadratic_form(&self, w: &[f64], penalized_sq_norm: f64) -> f64 {
        let sparse: f64 = self.sparse.iter().map(|(d, v)| v * w[d] * w[d]).sum();
        self.uniform * penalized_sq_norm + sparse
    }
}

/// Mean and diagonal variance of a corrupted example.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorruptionMoments {
    pub mean: SparseVector,
    pub variance: VarianceDiag,
}

impl CorruptionMoments {
    /// Moments of an uncorrupted (deterministic) example.
    pub fn exact(x: SparseVector) -> Self {
        CorruptionMoments {
            mean: x,
            variance: VarianceDiag::zero(),
        }
    }
}

fn check_poisson_domain(x: &SparseVector) -> Result<()> {
    match x.iter().find(|(_, v)| *v < 0.0) {
        Some((d, v)) => Err(Error::Domain(format!(
            "poisson corruption needs non-negative features, feature {d} is {v}"
        ))),
        None => Ok(()),
    }
}

pub fn moments(spec: &NoiseSpec, x: &SparseVector) -> Result<CorruptionMoments> {
    spec.validate()?;
    let variance = match *spec {
        NoiseSpec::None => VarianceDiag::zero(),
        NoiseSpec::Dropout { q } => {
            let ratio = q / (1.0 - q);
            let entries = x
                .iter()
                .filter(|&(_, v)| v != 0.0 && ratio > 0.0)
                .map(|(d, v)| (d, ratio * v * v))
                .collect();
            VarianceDiag::new(0.0, SparseVector::from_sorted_unchecked(entries))?
        }
        NoiseSpec::Gaussian { sigma2 } => VarianceDiag::new(sigma2, SparseVector::default())?,
        NoiseSpec::Laplace { scale } => {
            VarianceDiag::new(2.0 * scale * scale, SparseVector::default())?
        }
        NoiseSpec::Poisson => {
            check_poisson_domain(x)?;
            let entries = x.iter().filter(|&(_, v)| v != 0.0).collect();
            VarianceDiag::new(0.0, SparseVector::from_sorted_unchecked(entries))?
        }
    };
    Ok(CorruptionMoments {
        mean: x.clone(),
        variance,
    })
}

fn laplace_draw<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    // inverse CDF on u in (-1/2, 1/2)
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// One draw `x~ ~ p(x~ | x)` over a `dim`-feature space.
pub fn sample<R: Rng + ?Sized>(
    spec: &NoiseSpec,
    x: &SparseVector,
    dim: usize,
    rng: &mut R,
) -> Result<SparseVector> {
    spec.validate()?;
    if x.end() > dim {
        return Err(Error::Dimension {
            expected: dim,
            found: x.end(),
        });
    }
    let out = match *spec {
        NoiseSpec::None => x.clone(),
        NoiseSpec::Dropout { q } => {
            let keep_scale = 1.0 / (1.0 - q);
            let entries = x
                .iter()
                .filter_map(|(d, v)| {
                    if rng.random::<f64>() < q {
                        None
                    } else {
                        Some((d, v * keep_scale))
                    }
                })
                .collect();
            SparseVector::from_sorted_unchecked(entries)
        }
        NoiseSpec::Gaussian { sigma2 } => {
            if sigma2 == 0.0 {
                x.clone()
            } else {
                let normal = Normal::new(0.0, sigma2.sqrt())
                    .map_err(|e| Error::Numerical(e.to_string()))?;
                let mut dense = x.to_dense(dim);
                for v in dense.iter_mut() {
                    *v += normal.sample(rng);
                }
                SparseVector::from_sorted_unchecked(dense.into_iter().enumerate().collect())
            }
        }
        NoiseSpec::Laplace { scale } => {
            let mut dense = x.to_dense(dim);
            for v in dense.iter_mut() {
                *v += laplace_draw(scale, rng);
            }
            SparseVector::from_sorted_unchecked(dense.into_iter().enumerate().collect())
        }
        NoiseSpec::Poisson => {
            check_poisson_domain(x)?;
            let mut entries = Vec::with_capacity(x.nnz());
            for (d, v) in x.iter() {
                if v == 0.0 {
                    continue;
                }
                let draw: f64 = Poisson::new(v)
                    .map_err(|e| Error::Numerical(e.to_string()))?
                    .sample(rng);
                if draw != 0.0 {
                    entries.push((d, draw));
                }
            }
            SparseVector::from_sorted_unchecked(entries)
        }
    };
    Ok(out)
}
