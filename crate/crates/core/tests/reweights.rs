mod common;

use dropsvm_core::augmentation::{
    collapsed_hinge_objective, gamma_hinge, gamma_logistic, hinge_moments, DEFAULT_FLOOR,
};
use dropsvm_core::noise::moments;
use dropsvm_core::{ModelParams, NoiseSpec, SparseVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{gig_inverse_mean, neg_log_bound_integral, polya_gamma_mean_cosh, polya_gamma_mean_series};

#[test]
fn gamma_hinge_matches_gig_quadrature_on_grid() {
    for &s in &[0.01, 0.1, 1.0, 10.0, 100.0] {
        for &c in &[0.1, 1.0, 10.0] {
            let oracle = gig_inverse_mean(c * c * s);
            let got = gamma_hinge(s, c, DEFAULT_FLOOR);
            assert!((got - oracle).abs() <= 1e-8 * oracle.max(1.0), "s={s} c={c}: {got} vs {oracle}");
        }
    }
}

#[test]
fn gamma_hinge_worked_value() {
    let oracle = gig_inverse_mean(4.0 * 2.5);
    assert!((oracle - 0.316_227_8).abs() < 1e-7);
    assert!((gamma_hinge(2.5, 2.0, DEFAULT_FLOOR) - oracle).abs() < 1e-8);
}

#[test]
fn gamma_logistic_matches_cosh_identity_and_series() {
    for &second in &[1e-4, 0.01, 0.25, 1.0, 4.0, 25.0, 400.0] {
        for &c in &[0.1, 1.0, 2.0, 10.0] {
            let z = f64::sqrt(second);
            let got = gamma_logistic(second, c, DEFAULT_FLOOR);
            let cosh = polya_gamma_mean_cosh(c, z);
            let series = polya_gamma_mean_series(c, z);
            assert!((got - cosh).abs() <= 1e-8 * c.max(1.0), "s={second} c={c}: {got} vs {cosh}");
            assert!((got - series).abs() <= 1e-8 * c.max(1.0), "s={second} c={c}: {got} vs {series}");
        }
    }
}

#[test]
fn gamma_logistic_worked_value() {
    let oracle = polya_gamma_mean_cosh(2.0, 2.0);
    assert!((oracle - 0.380_797_1).abs() < 1e-7);
    assert!((gamma_logistic(4.0, 2.0, DEFAULT_FLOOR) - oracle).abs() < 1e-8);
    // z -> 0 limit
    assert!((polya_gamma_mean_series(3.0, 0.0) - 0.75).abs() < 1e-9);
}

#[test]
fn collapsed_hinge_is_negative_log_of_bound_integral() {
    let mut rng = ChaCha8Rng::seed_from_u64(214);
    for _ in 0..5 {
        let dim = 6;
        let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = ModelParams::new(w, rng.random_range(-0.5..0.5)).unwrap();
        let noise = NoiseSpec::Dropout { q: 0.5 };
        let c = rng.random_range(0.2..3.0);
        let mut total_oracle = model.penalized_sq_norm();
        let mut all = Vec::new();
        for n in 0..8 {
            let dense: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let x = SparseVector::from_dense(&dense).unwrap();
            let y = if n % 2 == 0 { 1.0 } else { -1.0 };
            let m = hinge_moments(&model, &moments(&noise, &x).unwrap(), y, 1.0).unwrap();
            total_oracle += neg_log_bound_integral(c, m.first, m.second);
            all.push(m);
        }
        let j = collapsed_hinge_objective(&model, &all, c);
        assert!(common::rel_diff(j, total_oracle) < 1e-6, "{j} vs {total_oracle}");
    }
}

#[test]
fn bound_quadrature_reproduces_closed_form_at_zero_mean() {
    // int (2 pi l)^(-1/2) exp(-(l + b/l)/2) dl = exp(-sqrt(b))
    for b in [0.01f64, 1.0, 10.0, 100.0, 1e4] {
        let v = neg_log_bound_integral(1.0, 0.0, b);
        assert!((v - b.sqrt()).abs() < 1e-10 * b.sqrt().max(1.0), "b={b}: {v}");
    }
}
