//! E-step quantities for the data-augmented hinge and logistic losses.
//!
//! For a linear score `s = w^T x~ + b` under a corrupting distribution only
//! two numbers per example matter: the mean `m = E[s]` and the variance
//! `v = Var[s] = sum_d V_d w_d^2`. From them:
//!
//! * hinge, with `zeta = ell - y s`: `E[zeta] = ell - y m` and
//!   `E[zeta^2] = (ell - y m)^2 + v`;
//! * logistic, with `omega = s`: `E[omega] = m` and `E[omega^2] = m^2 + v`.
//!
//! The hinge augmentation variable has a GIG(1/2, 1, c^2 E[zeta^2]) posterior
//! whose inverse mean is `1 / (c sqrt(E[zeta^2]))`. The logistic one is
//! Polya-Gamma PG(c, z) with `z = sqrt(E[omega^2])` and mean
//! `(c / 2z) tanh(z / 2)`. Plugging those optima back into the variational
//! bounds gives the closed-form "collapsed" objectives
//!
//! ```text
//! J(w)  = ||w||^2 + c sum_n ( E[zeta_n] + sqrt(E[zeta_n^2]) )
//! J'(w) = ||w||^2 + c sum_n ( log 2 + log cosh(z_n / 2) - y_n E[omega_n] / 2 )
//! ```
//!
//! which reduce to the regularized hinge and logistic objectives when there
//! is no corruption.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::noise::CorruptionMoments;

/// Default lower bound on second moments before taking square roots.
pub const DEFAULT_FLOOR: f64 = 1e-12;

/// Mean and variance of the score `w^T x~ + b` for one corrupted example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreMoments {
    pub mean: f64,
    pub variance: f64,
}

impl ScoreMoments {
    /// `penalized_sq_norm` must equal `model.penalized_sq_norm()`; it is
    /// passed in so that loops over examples compute it once.
    #[inline]
    pub fn compute(model: &ModelParams, mom: &CorruptionMoments, penalized_sq_norm: f64) -> Self {
        let coef = model.coef();
        ScoreMoments {
            mean: mom.mean.dot(coef) + model.bias(),
            variance: mom.variance.quadratic_form(coef, penalized_sq_norm),
        }
    }
}

/// First and second moment of the per-example margin variable
/// (`zeta` for the hinge loss, `omega` for the logistic loss).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleMoments {
    pub first: f64,
    pub second: f64,
}

impl ExampleMoments {
    #[inline]
    pub fn hinge(score: ScoreMoments, y: f64, ell: f64) -> Self {
        let first = ell - y * score.mean;
        ExampleMoments {
            first,
            second: first * first + score.variance,
        }
    }

    #[inline]
    pub fn logistic(score: ScoreMoments) -> Self {
        ExampleMoments {
            first: score.mean,
            second: score.mean * score.mean + score.variance,
        }
    }
}

fn check_dims(model: &ModelParams, mom: &CorruptionMoments) -> Result<()> {
    let found = mom.mean.end().max(mom.variance.sparse().end());
    if found > model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            found,
        });
    }
    Ok(())
}

/// `E[zeta]` and `E[zeta^2]` for `zeta = ell - y (w^T x~ + b)`.
pub fn hinge_moments(
    model: &ModelParams,
    mom: &CorruptionMoments,
    y: f64,
    ell: f64,
) -> Result<ExampleMoments> {
    check_dims(model, mom)?;
    let score = ScoreMoments::compute(model, mom, model.penalized_sq_norm());
    Ok(ExampleMoments::hinge(score, y, ell))
}

/// `E[omega]` and `E[omega^2]` for `omega = w^T x~ + b`.
pub fn logistic_moments(model: &ModelParams, mom: &CorruptionMoments) -> Result<ExampleMoments> {
    check_dims(model, mom)?;
    let score = ScoreMoments::compute(model, mom, model.penalized_sq_norm());
    Ok(ExampleMoments::logistic(score))
}

/// Hinge re-weight `E[1/lambda] = 1 / (c sqrt(E[zeta^2]))`.
#[inline]
pub fn gamma_hinge(second: f64, c: f64, floor: f64) -> f64 {
    1.0 / (c * second.max(floor).sqrt())
}

/// Logistic re-weight `E[lambda] = (c / 2z) tanh(z / 2)` with `z = sqrt(E[omega^2])`.
///
/// Returns the `z -> 0` limit `c / 4` below the floor.
#[inline]
pub fn gamma_logistic(second: f64, c: f64, floor: f64) -> f64 {
    if second < floor {
        return c / 4.0;
    }
    let z = second.sqrt();
    c / (2.0 * z) * (0.5 * z).tanh()
}

/// `log(cosh(x))` without overflow for large `|x|`.
#[inline]
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - LN_2
}

/// Per-example collapsed hinge bound divided by `c`: `E[zeta] + sqrt(E[zeta^2])`.
#[inline]
pub fn hinge_bound_term(m: &ExampleMoments) -> f64 {
    m.first + m.second.max(0.0).sqrt()
}

/// Per-example collapsed logistic bound divided by `c`.
#[inline]
pub fn logistic_bound_term(m: &ExampleMoments, y: f64) -> f64 {
    LN_2 + log_cosh(0.5 * m.second.max(0.0).sqrt()) - 0.5 * y * m.first
}

pub fn collapsed_hinge_objective(model: &ModelParams, moments: &[ExampleMoments], c: f64) -> f64 {
    let loss: f64 = moments.iter().map(hinge_bound_term).sum();
    model.penalized_sq_norm() + c * loss
}

pub fn collapsed_logistic_objective(
    model: &ModelParams,
    moments: &[ExampleMoments],
    labels: &[f64],
    c: f64,
) -> f64 {
    let loss: f64 = moments
        .iter()
        .zip(labels)
        .map(|(m, &y)| logistic_bound_term(m, y))
        .sum();
    model.penalized_sq_norm() + c * loss
}

fn check_gammas(gammas: &[f64], n: usize) -> Result<()> {
    if gammas.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: gammas.len(),
        });
    }
    if let Some(g) = gammas.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
        return Err(Error::InvalidData(format!("re-weights must be positive, got {g}")));
    }
    Ok(())
}

/// M-step objective of the hinge bound at fixed re-weights, including the
/// `1 / (2 gamma)` term so that it upper-bounds [`collapsed_hinge_objective`]
/// and touches it at `gamma = gamma_hinge(second)`.
pub fn surrogate_hinge_objective(
    model: &ModelParams,
    moments: &[ExampleMoments],
    gammas: &[f64],
    c: f64,
) -> Result<f64> {
    check_gammas(gammas, moments.len())?;
    let loss: f64 = moments
        .iter()
        .zip(gammas)
        .map(|(m, &g)| c * m.first + 0.5 * c * c * g * m.second + 0.5 / g)
        .sum();
    Ok(model.penalized_sq_norm() + loss)
}

/// Concave conjugate of `s -> c log cosh(sqrt(s) / 2)` at slope `gamma / 2`.
fn logistic_conjugate(gamma: f64, c: f64) -> f64 {
    if gamma >= c / 4.0 {
        return 0.0;
    }
    // solve (c / 2z) tanh(z / 2) = gamma; the left side decreases from c/4 to 0
    let mut lo = 0.0f64;
    let mut hi = c / (2.0 * gamma);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gamma_logistic(mid * mid, c, 0.0) > gamma {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let z = 0.5 * (lo + hi);
    c * log_cosh(0.5 * z) - 0.5 * gamma * z * z
}

/// M-step objective of the logistic bound at fixed re-weights `gamma = E[lambda]`,
/// completed with the conjugate term so that it upper-bounds
/// [`collapsed_logistic_objective`] with equality at `gamma_logistic`.
pub fn surrogate_logistic_objective(
    model: &ModelParams,
    moments: &[ExampleMoments],
    labels: &[f64],
    gammas: &[f64],
    c: f64,
) -> Result<f64> {
    check_gammas(gammas, moments.len())?;
    let loss: f64 = moments
        .iter()
        .zip(labels)
        .zip(gammas)
        .map(|((m, &y), &g)| {
            0.5 * g * m.second - 0.5 * c * y * m.first + c * LN_2 + logistic_conjugate(g, c)
        })
        .sum();
    Ok(model.penalized_sq_norm() + loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SparseVector;
    use crate::noise::{moments, NoiseSpec};
    use proptest::prelude::*;

    fn one_d(w: f64) -> ModelParams {
        ModelParams::new(vec![w], 0.0).unwrap()
    }

    fn x1(v: f64) -> SparseVector {
        SparseVector::new(vec![(0, v)]).unwrap()
    }

    #[test]
    fn hinge_moments_dropout_example() {
        // x~ in {0, 2}: zeta in {1, -3}, E[zeta] = -1, E[zeta^2] = 5
        let mom = moments(&NoiseSpec::Dropout { q: 0.5 }, &x1(1.0)).unwrap();
        let m = hinge_moments(&one_d(2.0), &mom, 1.0, 1.0).unwrap();
        assert_eq!(m.first, -1.0);
        assert_eq!(m.second, 5.0);
    }

    #[test]
    fn hinge_moments_zero_weights_and_no_noise() {
        let mom = moments(&NoiseSpec::Dropout { q: 0.3 }, &x1(4.0)).unwrap();
        let m = hinge_moments(&ModelParams::zeros(1), &mom, -1.0, 1.0).unwrap();
        assert_eq!((m.first, m.second), (1.0, 1.0));

        let mom = moments(&NoiseSpec::Dropout { q: 0.0 }, &x1(0.7)).unwrap();
        let model = ModelParams::new(vec![1.3], -0.2).unwrap();
        let m = hinge_moments(&model, &mom, -1.0, 1.0).unwrap();
        let zeta: f64 = 1.0 + (1.3 * 0.7 - 0.2);
        assert!((m.second - zeta * zeta).abs() < 1e-15);
    }

    #[test]
    fn logistic_moments_examples() {
        let mom = moments(&NoiseSpec::Dropout { q: 0.5 }, &x1(1.0)).unwrap();
        let m = logistic_moments(&one_d(2.0), &mom).unwrap();
        assert_eq!((m.first, m.second), (2.0, 8.0));

        let m = logistic_moments(&ModelParams::zeros(1), &mom).unwrap();
        assert_eq!((m.first, m.second), (0.0, 0.0));

        let mom = moments(&NoiseSpec::None, &x1(1.5)).unwrap();
        let m = logistic_moments(&one_d(2.0), &mom).unwrap();
        assert_eq!(m.second, 9.0);
    }

    #[test]
    fn moments_reject_wide_examples() {
        let mom = moments(&NoiseSpec::None, &SparseVector::new(vec![(3, 1.0)]).unwrap()).unwrap();
        assert!(hinge_moments(&ModelParams::zeros(2), &mom, 1.0, 1.0).is_err());
        assert!(logistic_moments(&ModelParams::zeros(2), &mom).is_err());
    }

    #[test]
    fn gamma_hinge_examples() {
        assert_eq!(gamma_hinge(4.0, 1.0, DEFAULT_FLOOR), 0.5);
        assert_eq!(gamma_hinge(1.0, 1.0, DEFAULT_FLOOR), 1.0);
        assert!((gamma_hinge(2.5, 2.0, DEFAULT_FLOOR) - 0.316_227_766_016_837_94).abs() < 1e-15);
        assert_eq!(gamma_hinge(0.0, 1.0, DEFAULT_FLOOR), 1e6);
    }

    #[test]
    fn gamma_logistic_examples() {
        assert_eq!(gamma_logistic(0.0, 3.0, DEFAULT_FLOOR), 0.75);
        assert!((gamma_logistic(1e-10, 3.0, DEFAULT_FLOOR) - 0.75).abs() < 1e-9);
        let g = gamma_logistic(4.0, 2.0, DEFAULT_FLOOR);
        assert!((g - 0.5 * 1f64.tanh()).abs() < 1e-15);
        assert!((g - 0.380_797_077_977_882_4).abs() < 1e-12);
        let g = gamma_logistic(2500.0, 1.0, DEFAULT_FLOOR);
        assert!((g - 0.01).abs() < 1e-12);
        let g = gamma_logistic(1e300, 1.0, DEFAULT_FLOOR);
        assert!(g.is_finite() && g > 0.0);
    }

    #[test]
    fn log_cosh_is_stable() {
        assert_eq!(log_cosh(0.0), 0.0);
        assert!((log_cosh(1.0) - 1f64.cosh().ln()).abs() < 1e-15);
        assert!((log_cosh(-3.0) - 3f64.cosh().ln()).abs() < 1e-14);
        assert!((log_cosh(1000.0) - (1000.0 - LN_2)).abs() < 1e-9);
    }

    #[test]
    fn collapsed_hinge_at_zero_weights() {
        let ms = vec![ExampleMoments { first: 1.0, second: 1.0 }; 3];
        assert_eq!(collapsed_hinge_objective(&ModelParams::zeros(2), &ms, 1.0), 6.0);
    }

    #[test]
    fn collapsed_logistic_at_zero_weights() {
        let ms = vec![ExampleMoments { first: 0.0, second: 0.0 }; 4];
        let j = collapsed_logistic_objective(&ModelParams::zeros(2), &ms, &[1.0, -1.0, 1.0, 1.0], 2.5);
        assert!((j - 2.5 * 4.0 * LN_2).abs() < 1e-14);
    }

    #[test]
    fn surrogate_rejects_nonpositive_gammas() {
        let ms = vec![ExampleMoments { first: 1.0, second: 1.0 }];
        assert!(surrogate_hinge_objective(&ModelParams::zeros(1), &ms, &[0.0], 1.0).is_err());
        assert!(surrogate_hinge_objective(&ModelParams::zeros(1), &ms, &[-1.0], 1.0).is_err());
        assert!(surrogate_hinge_objective(&ModelParams::zeros(1), &ms, &[], 1.0).is_err());
    }

    #[test]
    fn surrogate_hinge_with_doubled_gamma_is_strictly_larger() {
        let ms = vec![
            ExampleMoments { first: 0.5, second: 2.0 },
            ExampleMoments { first: -1.0, second: 3.0 },
        ];
        let c = 1.5;
        let m = ModelParams::new(vec![0.3, -0.2], 0.1).unwrap();
        let star: Vec<f64> = ms.iter().map(|e| gamma_hinge(e.second, c, DEFAULT_FLOOR)).collect();
        let doubled: Vec<f64> = star.iter().map(|g| 2.0 * g).collect();
        let j = collapsed_hinge_objective(&m, &ms, c);
        let q_star = surrogate_hinge_objective(&m, &ms, &star, c).unwrap();
        let q_doubled = surrogate_hinge_objective(&m, &ms, &doubled, c).unwrap();
        assert!((q_star - j).abs() < 1e-10);
        assert!(q_doubled > j);
    }

    /// With gamma fixed at 1/c and ell = 0 the hinge surrogate is, up to
    /// constants, (c/2) sum E[(w^T x~ - y)^2] plus the ridge term.
    #[test]
    fn frozen_surrogate_is_expected_quadratic() {
        let c = 2.0;
        let spec = NoiseSpec::Dropout { q: 0.4 };
        let xs = [x1(1.0), x1(-2.0), x1(0.5)];
        let ys = [1.0, -1.0, -1.0];
        let gammas = vec![1.0 / c; 3];
        let eval = |w: f64| {
            let model = one_d(w);
            let ms: Vec<ExampleMoments> = xs
                .iter()
                .zip(ys)
                .map(|(x, y)| hinge_moments(&model, &moments(&spec, x).unwrap(), y, 0.0).unwrap())
                .collect();
            let q = surrogate_hinge_objective(&model, &ms, &gammas, c).unwrap();
            let quad: f64 = xs
                .iter()
                .zip(ys)
                .map(|(x, y)| {
                    let v = x.get(0);
                    let var = 0.4 / 0.6 * v * v;
                    (w * v - y) * (w * v - y) + var * w * w
                })
                .sum();
            q - (w * w + 0.5 * c * quad)
        };
        let base = eval(0.0);
        for w in [-1.0, 0.3, 2.0, 5.0] {
            assert!((eval(w) - base).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn jensen_holds_for_computed_moments(
            w in proptest::collection::vec(-3.0f64..3.0, 4),
            b in -1.0f64..1.0,
            vals in proptest::collection::vec(-2.0f64..2.0, 4),
            q in 0.0f64..0.95,
            y in prop_oneof![Just(1.0f64), Just(-1.0f64)],
            ell in 0.1f64..3.0,
        ) {
            let model = ModelParams::new(w, b).unwrap();
            let x = SparseVector::from_dense(&vals).unwrap();
            let mom = moments(&NoiseSpec::Dropout { q }, &x).unwrap();
            for m in [hinge_moments(&model, &mom, y, ell).unwrap(), logistic_moments(&model, &mom).unwrap()] {
                prop_assert!(m.second >= 0.0);
                prop_assert!(m.second >= m.first * m.first - 1e-9);
            }
        }

        #[test]
        fn hinge_surrogate_majorizes_collapsed(
            firsts in proptest::collection::vec(-3.0f64..3.0, 1..6),
            extra in proptest::collection::vec(0.0f64..4.0, 6),
            scales in proptest::collection::vec(0.05f64..20.0, 6),
            c in 0.1f64..10.0,
        ) {
            let ms: Vec<ExampleMoments> = firsts
                .iter()
                .zip(&extra)
                .map(|(&f, &e)| ExampleMoments { first: f, second: f * f + e + 1e-3 })
                .collect();
            let model = ModelParams::new(vec![0.4, -0.7], 0.2).unwrap();
            let star: Vec<f64> = ms.iter().map(|m| gamma_hinge(m.second, c, DEFAULT_FLOOR)).collect();
            let perturbed: Vec<f64> = star.iter().zip(&scales).map(|(g, s)| g * s).collect();
            let j = collapsed_hinge_objective(&model, &ms, c);
            let q_star = surrogate_hinge_objective(&model, &ms, &star, c).unwrap();
            let q = surrogate_hinge_objective(&model, &ms, &perturbed, c).unwrap();
            prop_assert!((q_star - j).abs() <= 1e-9 * j.abs().max(1.0));
            prop_assert!(q >= j - 1e-9 * j.abs().max(1.0));
        }

        #[test]
        fn logistic_surrogate_majorizes_collapsed(
            firsts in proptest::collection::vec(-3.0f64..3.0, 1..6),
            extra in proptest::collection::vec(0.0f64..4.0, 6),
            scales in proptest::collection::vec(0.05f64..20.0, 6),
            labels in proptest::collection::vec(prop_oneof![Just(1.0f64), Just(-1.0f64)], 6),
            c in 0.1f64..10.0,
        ) {
            let ms: Vec<ExampleMoments> = firsts
                .iter()
                .zip(&extra)
                .map(|(&f, &e)| ExampleMoments { first: f, second: f * f + e })
                .collect();
            let ys = &labels[..ms.len()];
            let model = ModelParams::new(vec![0.4, -0.7], 0.2).unwrap();
            let star: Vec<f64> = ms.iter().map(|m| gamma_logistic(m.second, c, DEFAULT_FLOOR)).collect();
            let perturbed: Vec<f64> = star.iter().zip(&scales).map(|(g, s)| g * s).collect();
            let j = collapsed_logistic_objective(&model, &ms, ys, c);
            let q_star = surrogate_logistic_objective(&model, &ms, ys, &star, c).unwrap();
            let q = surrogate_logistic_objective(&model, &ms, ys, &perturbed, c).unwrap();
            prop_assert!((q_star - j).abs() <= 1e-9 * j.abs().max(1.0));
            prop_assert!(q >= j - 1e-9 * j.abs().max(1.0));
        }

        #[test]
        fn zero_noise_objectives_are_exact_losses(
            w in proptest::collection::vec(-3.0f64..3.0, 3),
            b in -1.0f64..1.0,
            data in proptest::collection::vec((proptest::collection::vec(-2.0f64..2.0, 3), any::<bool>()), 1..8),
            c in 0.1f64..5.0,
            ell in 0.1f64..2.0,
        ) {
            let model = ModelParams::new(w, b).unwrap();
            let mut hinge = Vec::new();
            let mut logi = Vec::new();
            let mut ys = Vec::new();
            let mut exact_hinge = 0.0;
            let mut exact_logistic = 0.0;
            for (vals, pos) in &data {
                let y = if *pos { 1.0 } else { -1.0 };
                let x = SparseVector::from_dense(vals).unwrap();
                let mom = moments(&NoiseSpec::Dropout { q: 0.0 }, &x).unwrap();
                let f = model.decision(&x).unwrap();
                exact_hinge += (ell - y * f).max(0.0);
                exact_logistic += (-y * f).exp().ln_1p();
                hinge.push(hinge_moments(&model, &mom, y, ell).unwrap());
                logi.push(logistic_moments(&model, &mom).unwrap());
                ys.push(y);
            }
            let n = data.len() as f64;
            let reg = model.penalized_sq_norm();
            let jh = collapsed_hinge_objective(&model, &hinge, c);
            let jl = collapsed_logistic_objective(&model, &logi, &ys, c);
            prop_assert!((jh - (reg + 2.0 * c * exact_hinge)).abs() <= 1e-12 * n * jh.abs().max(1.0));
            prop_assert!((jl - (reg + c * exact_logistic)).abs() <= 1e-12 * n * jl.abs().max(1.0));
        }
    }
}
