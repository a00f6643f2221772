//! Reference computations that share no code with the library: quadrature,
//! series expansions, brute-force enumeration and plain first-order solvers.
#![allow(dead_code)]

use dropsvm_core::{Dataset, ModelParams, SparseVector};
use quadrature::double_exponential;

/// `int_0^inf f(lambda) d lambda` through `lambda = center e^u`, summing
/// panels of width 1/2 over a range wide enough for integrands shaped like
/// `exp(-center (cosh u - 1))`.
fn integrate_positive(f: impl Fn(f64) -> f64, center: f64) -> f64 {
    let shift = center.ln();
    let g = |u: f64| {
        let lambda = (u + shift).exp();
        f(lambda) * lambda
    };
    let half_width = (400.0 / center.min(1.0)).ln() + 4.0;
    let panels = (2.0 * half_width / 0.5).ceil() as usize;
    let step = 2.0 * half_width / panels as f64;
    (0..panels)
        .map(|k| {
            let a = -half_width + k as f64 * step;
            double_exponential::integrate(&g, a, a + step, 1e-16).integral
        })
        .sum()
}

/// `E[1 / lambda]` under `GIG(lambda; 1/2, 1, b)` with density proportional to
/// `lambda^(-1/2) exp(-(lambda + b / lambda) / 2)`.
pub fn gig_inverse_mean(b: f64) -> f64 {
    let peak = b.sqrt();
    // shift the exponent by its maximum so both integrals are O(1)
    let kernel = move |l: f64| (-0.5 * (l + b / l) + peak).exp();
    let num = integrate_positive(|l| l.powf(-1.5) * kernel(l), peak);
    let den = integrate_positive(|l| l.powf(-0.5) * kernel(l), peak);
    num / den
}

/// `-log int_0^inf (2 pi lambda)^(-1/2) exp(-E[(lambda + c zeta)^2] / (2 lambda)) d lambda`
/// for `E[zeta] = first`, `E[zeta^2] = second`.
pub fn neg_log_bound_integral(c: f64, first: f64, second: f64) -> f64 {
    let b = c * c * second;
    let peak = b.sqrt();
    let integral = integrate_positive(
        |l| (2.0 * std::f64::consts::PI * l).powf(-0.5) * (-0.5 * (l + b / l) + peak).exp(),
        peak.max(1e-3),
    );
    c * first + peak - integral.ln()
}

/// Mean of `PG(c, z)` from the infinite-sum representation
/// `lambda = (1 / 2 pi^2) sum_k g_k / ((k - 1/2)^2 + z^2 / (4 pi^2))`, `g_k ~ Gamma(c, 1)`.
pub fn polya_gamma_mean_series(c: f64, z: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let a2 = z * z / (4.0 * pi * pi);
    let terms = 100_000;
    let mut sum = 0.0;
    // add smallest terms first
    for k in (1..=terms).rev() {
        let h = k as f64 - 0.5;
        sum += 1.0 / (h * h + a2);
    }
    // the sum is a midpoint rule for int_0^inf dx / (x^2 + a^2); the tail
    // beyond `terms` is its remaining integral
    let k = terms as f64;
    let tail = if a2 > 0.0 {
        let a = a2.sqrt();
        (0.5 * pi - (k / a).atan()) / a
    } else {
        1.0 / k
    };
    c / (2.0 * pi * pi) * (sum + tail)
}

/// `E[lambda]` under `PG(c, z)` by differentiating the Laplace transform
/// `E_{PG(c,0)}[exp(-lambda t)] = cosh(sqrt(2 t) / 2)^(-c)` at `t = z^2 / 2`
/// (Richardson-extrapolated central differences).
pub fn polya_gamma_mean_cosh(c: f64, z: f64) -> f64 {
    let log_cosh = |x: f64| {
        let a = x.abs();
        a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
    };
    let f = |t: f64| c * log_cosh((2.0 * t).sqrt() / 2.0);
    let t0 = 0.5 * z * z;
    let h = 1e-3 * t0.max(1e-2);
    let d = |h: f64| (f(t0 + h) - f(t0 - h)) / (2.0 * h);
    let d1 = d(h);
    let d2 = d(h / 2.0);
    let d3 = d(h / 4.0);
    let r1 = (4.0 * d2 - d1) / 3.0;
    let r2 = (4.0 * d3 - d2) / 3.0;
    (16.0 * r2 - r1) / 15.0
}

/// Exact moments under dropout by enumerating every keep/drop pattern.
#[derive(Debug, Clone, Copy)]
pub struct Enumerated {
    pub score_mean: f64,
    pub score_second: f64,
    pub hinge_first: f64,
    pub hinge_second: f64,
    /// `E[max(0, zeta)]`.
    pub hinge_loss: f64,
}

pub fn enumerate_dropout(model: &ModelParams, x: &SparseVector, y: f64, ell: f64, q: f64) -> Enumerated {
    let entries = x.entries();
    assert!(entries.len() <= 20, "enumeration is exponential");
    let w = model.weights();
    let mut out = Enumerated {
        score_mean: 0.0,
        score_second: 0.0,
        hinge_first: 0.0,
        hinge_second: 0.0,
        hinge_loss: 0.0,
    };
    for mask in 0u32..(1 << entries.len()) {
        let mut p = 1.0;
        let mut s = model.bias();
        for (j, &(d, v)) in entries.iter().enumerate() {
            if mask & (1 << j) != 0 {
                p *= 1.0 - q;
                s += w[d] * v / (1.0 - q);
            } else {
                p *= q;
            }
        }
        let zeta = ell - y * s;
        out.score_mean += p * s;
        out.score_second += p * s * s;
        out.hinge_first += p * zeta;
        out.hinge_second += p * zeta * zeta;
        out.hinge_loss += p * zeta.max(0.0);
    }
    out
}

fn hinge_value(w: &[f64], b: f64, data: &Dataset, c: f64, ell: f64) -> f64 {
    let reg: f64 = w.iter().map(|v| v * v).sum();
    let loss: f64 = data
        .iter()
        .map(|(x, y)| (ell - y * (x.dot(w) + b)).max(0.0))
        .sum();
    reg + 2.0 * c * loss
}

/// `||w||^2 + 2c sum max(0, ell - y (w^T x + b))`.
pub fn svm_objective(model: &ModelParams, data: &Dataset, c: f64, ell: f64) -> f64 {
    hinge_value(model.weights(), model.bias(), data, c, ell)
}

/// Long-run subgradient descent with the strongly-convex step
/// `1 / (2 (t + 10))`, returning the best iterate's objective.
pub fn svm_subgradient(data: &Dataset, c: f64, ell: f64, iters: usize) -> f64 {
    let dim = data.dim();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut best = hinge_value(&w, b, data, c, ell);
    for t in 1..=iters {
        let mut gw: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
        let mut gb = 0.0;
        for (x, y) in data.iter() {
            if ell - y * (x.dot(&w) + b) > 0.0 {
                for (d, v) in x.iter() {
                    gw[d] -= 2.0 * c * y * v;
                }
                gb -= 2.0 * c * y;
            }
        }
        let eta = 1.0 / (2.0 * (t as f64 + 10.0));
        for (wi, gi) in w.iter_mut().zip(&gw) {
            *wi -= eta * gi;
        }
        b -= eta * gb;
        best = best.min(hinge_value(&w, b, data, c, ell));
    }
    best
}

/// Dual coordinate descent for the SVM with the offset fixed at `b`. Halving
/// the primal gives `(1/2)||w||^2 + c sum max(0, ell_n - y_n w^T x_n)` with
/// `ell_n = ell - y_n b`, whose dual is
/// `max sum_n ell_n a_n - (1/2)||sum_n a_n y_n x_n||^2`, `0 <= a_n <= c`.
fn svm_dual_fixed_offset(data: &Dataset, c: f64, ell: f64, b: f64) -> (Vec<f64>, f64) {
    let n = data.len();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; data.dim()];
    let sq: Vec<f64> = data.examples().iter().map(|x| x.squared_norm()).collect();
    for _sweep in 0..20_000 {
        let mut max_change: f64 = 0.0;
        for i in 0..n {
            let (x, y) = (&data.examples()[i], data.labels()[i]);
            if sq[i] == 0.0 {
                continue;
            }
            let grad = ell - y * b - y * x.dot(&w);
            let new = (alpha[i] + grad / sq[i]).clamp(0.0, c);
            let delta = new - alpha[i];
            if delta != 0.0 {
                for (d, v) in x.iter() {
                    w[d] += delta * y * v;
                }
                alpha[i] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < 1e-13 {
            break;
        }
    }
    let value = hinge_value(&w, b, data, c, ell);
    (w, value)
}

/// High-accuracy SVM optimum: exact inner dual solve, golden-section search
/// over the (convex) profile in the offset.
pub fn svm_reference(data: &Dataset, c: f64, ell: f64) -> (ModelParams, f64) {
    let profile = |b: f64| svm_dual_fixed_offset(data, c, ell, b).1;
    let (mut lo, mut hi) = (-4.0 * ell, 4.0 * ell);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (profile(x1), profile(x2));
    while hi - lo > 1e-9 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = profile(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = profile(x2);
        }
    }
    let b = 0.5 * (lo + hi);
    let (w, value) = svm_dual_fixed_offset(data, c, ell, b);
    (ModelParams::new(w, b).unwrap(), value)
}

/// `||w||^2 + c sum log(1 + exp(-y (w^T x + b)))`.
pub fn logistic_objective(model: &ModelParams, data: &Dataset, c: f64) -> f64 {
    let w = model.weights();
    let reg: f64 = w.iter().map(|v| v * v).sum();
    let loss: f64 = data
        .iter()
        .map(|(x, y)| {
            let m = -y * (x.dot(w) + model.bias());
            m.max(0.0) + (-m.abs()).exp().ln_1p()
        })
        .sum();
    reg + c * loss
}

/// Plain gradient descent with step `1 / L` until the gradient vanishes.
pub fn logistic_gradient_descent(data: &Dataset, c: f64) -> (ModelParams, f64) {
    let dim = data.dim();
    let lipschitz = 2.0 + 0.25 * c * data.examples().iter().map(|x| x.squared_norm() + 1.0).sum::<f64>();
    let mut coef = vec![0.0; dim + 1];
    for _ in 0..200_000 {
        let mut grad: Vec<f64> = coef.iter().map(|v| 2.0 * v).collect();
        grad[dim] = 0.0;
        for (x, y) in data.iter() {
            let s = x.dot(&coef[..dim]) + coef[dim];
            let sig = 1.0 / (1.0 + (y * s).exp());
            for (d, v) in x.iter() {
                grad[d] -= c * y * v * sig;
            }
            grad[dim] -= c * y * sig;
        }
        let norm = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
        if norm < 1e-11 {
            break;
        }
        for (ci, gi) in coef.iter_mut().zip(&grad) {
            *ci -= gi / lipschitz;
        }
    }
    let model = ModelParams::from_coef(coef).unwrap();
    let value = logistic_objective(&model, data, c);
    (model, value)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
