//! M-step solvers for expected re-weighted least squares.
//!
//! Both IRLS trainers reduce each M-step to
//!
//! ```text
//! min_w  r ||w_{1..D}||^2 + sum_n a_n E[(w^T x~_n + b - t_n)^2]
//! E[(w^T x~ + b - t)^2] = (w^T mu + b - t)^2 + sum_d V_d w_d^2
//! ```
//!
//! with per-example weights `a_n > 0` and targets `t_n`. The dense solver
//! forms the `(D+1) x (D+1)` normal equations; the quasi-Newton solver only
//! touches stored entries and scales to high-dimensional sparse data.

pub mod lbfgs;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::noise::CorruptionMoments;

pub use lbfgs::LbfgsOptions;

/// Largest coordinate count (features plus offset) solved densely by [`MStepSolver::Auto`].
pub const DENSE_THRESHOLD: usize = 2000;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MStepSolver {
    /// Dense when `D + 1 <= DENSE_THRESHOLD`, quasi-Newton otherwise.
    #[default]
    Auto,
    ClosedForm,
    QuasiNewton,
}

/// One expected re-weighted least-squares problem.
///
/// Row `n` is the corrupted example with moments `rows[n]`, weight `a_n` and
/// target `t_n`. When `fit_offset` is set an unpenalized, uncorrupted
/// constant feature is appended at index `dim`; otherwise the offset
/// coordinate is held at zero.
#[derive(Debug, Clone)]
pub struct WlsProblem<'a> {
    dim: usize,
    fit_offset: bool,
    rows: &'a [CorruptionMoments],
    weights: Vec<f64>,
    targets: Vec<f64>,
    ridge: f64,
}

impl<'a> WlsProblem<'a> {
    pub fn new(
        dim: usize,
        fit_offset: bool,
        rows: &'a [CorruptionMoments],
        weights: Vec<f64>,
        targets: Vec<f64>,
        ridge: f64,
    ) -> Result<Self> {
        if weights.len() != rows.len() || targets.len() != rows.len() {
            return Err(Error::Dimension {
                expected: rows.len(),
                found: if weights.len() != rows.len() {
                    weights.len()
                } else {
                    targets.len()
                },
            });
        }
        if let Some(a) = weights.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::InvalidData(format!("least-squares weight {a} is not positive")));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidData("least-squares targets must be finite".into()));
        }
        if !(ridge.is_finite() && ridge >= 0.0) {
            return Err(Error::InvalidData(format!("ridge {ridge} must be >= 0")));
        }
        for row in rows {
            let found = row.mean.end().max(row.variance.sparse().end());
            if found > dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found,
                });
            }
        }
        Ok(WlsProblem {
            dim,
            fit_offset,
            rows,
            weights,
            targets,
            ridge,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fit_offset(&self) -> bool {
        self.fit_offset
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Value and, if `grad` is given, gradient at `coef` (length `dim + 1`).
    fn evaluate(&self, coef: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let d = self.dim;
        let w_pen = &coef[..d];
        let pen_sq: f64 = w_pen.iter().map(|w| w * w).sum();
        let bias = if self.fit_offset { coef[d] } else { 0.0 };
        let mut value = self.ridge * pen_sq;
        match grad {
            None => {
                for ((row, &a), &t) in self.rows.iter().zip(&self.weights).zip(&self.targets) {
                    let r = row.mean.dot(coef) + bias - t;
                    value += a * (r * r + row.variance.quadratic_form(coef, pen_sq));
                }
            }
            Some(grad) => {
                grad.fill(0.0);
                let mut uniform = self.ridge;
                for ((row, &a), &t) in self.rows.iter().zip(&self.weights).zip(&self.targets) {
                    let r = row.mean.dot(coef) + bias - t;
                    value += a * (r * r + row.variance.quadratic_form(coef, pen_sq));
                    let scale = 2.0 * a * r;
                    for (i, x) in row.mean.iter() {
                        grad[i] += scale * x;
                    }
                    if self.fit_offset {
                        grad[d] += scale;
                    }
                    for (i, v) in row.variance.sparse().iter() {
                        grad[i] += 2.0 * a * v * coef[i];
                    }
                    uniform += a * row.variance.uniform();
                }
                for (g, w) in grad[..d].iter_mut().zip(w_pen) {
                    *g += 2.0 * uniform * w;
                }
            }
        }
        value
    }

    fn check_model(&self, model: &ModelParams) -> Result<()> {
        if model.dim() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: model.dim(),
            });
        }
        Ok(())
    }

    pub fn objective(&self, model: &ModelParams) -> Result<f64> {
        self.check_model(model)?;
        Ok(self.evaluate(model.coef(), None))
    }

    /// Objective value and gradient with respect to all `dim + 1` coefficients.
    pub fn objective_and_gradient(&self, model: &ModelParams) -> Result<(f64, Vec<f64>)> {
        self.check_model(model)?;
        let mut grad = vec![0.0; self.dim + 1];
        let value = self.evaluate(model.coef(), Some(&mut grad));
        Ok((value, grad))
    }

    /// Normal equations `(r I' + sum a (mu mu^T + V)) w = sum a t mu`, in
    /// the solved coordinates (the offset only when it is fitted).
    fn normal_equations(&self) -> (DMatrix<f64>, DVector<f64>) {
        let d = self.dim;
        let p = d + usize::from(self.fit_offset);
        // symmetric, so row- vs column-major storage does not matter
        let mut a_mat = vec![0.0; p * p];
        let mut rhs = vec![0.0; p];
        for i in 0..d {
            a_mat[i * p + i] = self.ridge;
        }
        let mut idx: Vec<(usize, f64)> = Vec::new();
        for ((row, &a), &t) in self.rows.iter().zip(&self.weights).zip(&self.targets) {
            idx.clear();
            idx.extend(row.mean.iter());
            if self.fit_offset {
                idx.push((d, 1.0));
            }
            for (k, &(i, xi)) in idx.iter().enumerate() {
                rhs[i] += a * t * xi;
                let axi = a * xi;
                for &(j, xj) in &idx[k..] {
                    a_mat[i * p + j] += axi * xj;
                }
            }
            for (i, v) in row.variance.sparse().iter() {
                a_mat[i * p + i] += a * v;
            }
            let u = a * row.variance.uniform();
            if u != 0.0 {
                for i in 0..d {
                    a_mat[i * p + i] += u;
                }
            }
        }
        for i in 0..p {
            for j in (i + 1)..p {
                a_mat[j * p + i] = a_mat[i * p + j];
            }
        }
        (DMatrix::from_vec(p, p, a_mat), DVector::from_vec(rhs))
    }
}

/// Exact minimizer by Cholesky factorization of the normal equations.
///
/// A failed factorization is retried with diagonal jitter growing from
/// `1e-10` to `1e-6` (relative to the mean diagonal), followed by iterative
/// refinement against the unjittered system.
pub fn solve_closed_form(problem: &WlsProblem<'_>) -> Result<ModelParams> {
    let (a_mat, rhs) = problem.normal_equations();
    let p = rhs.len();
    let mut solution = match Cholesky::new(a_mat.clone()) {
        Some(chol) => chol.solve(&rhs),
        None => {
            let mean_diag = (a_mat.trace() / p.max(1) as f64).max(1.0);
            let mut jitter = JITTER_START;
            loop {
                let mut shifted = a_mat.clone();
                for i in 0..p {
                    shifted[(i, i)] += jitter * mean_diag;
                }
                if let Some(chol) = Cholesky::new(shifted) {
                    let mut x = chol.solve(&rhs);
                    for _ in 0..3 {
                        let residual = &rhs - &a_mat * &x;
                        x += chol.solve(&residual);
                    }
                    break x;
                }
                jitter *= 10.0;
                if jitter > JITTER_MAX * (1.0 + 1e-9) {
                    return Err(Error::Numerical(
                        "normal equations are singular even after diagonal jitter".into(),
                    ));
                }
            }
        }
    };
    let residual = (&rhs - &a_mat * &solution).norm();
    if !(residual <= 1e-8 * (1.0 + rhs.norm())) {
        return Err(Error::Numerical(format!(
            "normal-equation residual {residual:.3e} exceeds tolerance"
        )));
    }
    if !problem.fit_offset {
        solution = solution.push(0.0);
    }
    ModelParams::from_coef(solution.data.into())
}

#[derive(Debug, Clone)]
pub struct QuasiNewtonOutcome {
    pub model: ModelParams,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// L-BFGS minimization from `start`, stopping once
/// `||grad||_inf <= grad_tol (1 + |value|)` or after `opts.max_iters` steps.
pub fn solve_quasi_newton(
    problem: &WlsProblem<'_>,
    start: &ModelParams,
    opts: &LbfgsOptions,
) -> Result<QuasiNewtonOutcome> {
    problem.check_model(start)?;
    let mut x0 = start.coef().to_vec();
    if !problem.fit_offset {
        x0[problem.dim] = 0.0;
    }
    let result = lbfgs::minimize(|x, g| problem.evaluate(x, Some(g)), x0, opts)?;
    Ok(QuasiNewtonOutcome {
        model: ModelParams::from_coef(result.x)?,
        value: result.value,
        iterations: result.iterations,
        converged: result.converged,
    })
}

/// Dispatches to the dense or quasi-Newton solver. `start` warm-starts the latter.
pub fn solve(
    problem: &WlsProblem<'_>,
    start: &ModelParams,
    solver: MStepSolver,
    qn: &LbfgsOptions,
) -> Result<ModelParams> {
    let dense = match solver {
        MStepSolver::ClosedForm => true,
        MStepSolver::QuasiNewton => false,
        MStepSolver::Auto => problem.dim + 1 <= DENSE_THRESHOLD,
    };
    if dense {
        solve_closed_form(problem)
    } else {
        Ok(solve_quasi_newton(problem, start, qn)?.model)
    }
}
