//! Training loops: Dropout-SVM and Dropout-Logistic by IRLS, the
//! expected-quadratic (MCF-Quadratic) baseline, explicit corruption, and a
//! one-vs-all multiclass wrapper.
//!
//! Both IRLS trainers run the same skeleton. The E-step turns the score
//! moments of every example into a re-weight `gamma_n`; the M-step solves an
//! expected weighted least-squares problem with ridge 1:
//!
//! | loss     | gamma_n                        | weight a_n       | target t_n                    |
//! |----------|--------------------------------|------------------|-------------------------------|
//! | hinge    | `1 / (c sqrt(E[zeta^2]))`      | `c^2 gamma / 2`  | `(ell + 1 / (c gamma)) y`     |
//! | logistic | `(c / 2z) tanh(z / 2)`         | `gamma / 2`      | `(c / (2 gamma)) y`           |
//!
//! Every weight is further multiplied by the example's loss weight (`1/M`
//! for explicit corruption). The collapsed objective is recorded after each
//! E-step and must never increase.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::augmentation::{
    gamma_hinge, gamma_logistic, hinge_bound_term, logistic_bound_term, ExampleMoments,
    ScoreMoments, DEFAULT_FLOOR,
};
use crate::data::{Dataset, MulticlassDataset, SparseVector};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::noise::{self, CorruptionMoments, NoiseSpec};
use crate::wls::{self, LbfgsOptions, MStepSolver, WlsProblem};

/// Absolute slack (scaled by `max(1, |J|)`) allowed when checking that the
/// collapsed objective does not increase.
pub const MONOTONE_SLACK: f64 = 1e-9;

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite and > 0, got {value}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HingeConfig {
    /// Loss weight against the unit-coefficient `||w||^2` regularizer.
    pub c: f64,
    /// Margin cost `ell` of the hinge `max(0, ell - y f(x))`.
    pub ell: f64,
    pub max_iters: usize,
    /// Relative change of the collapsed objective that counts as converged.
    pub tol: f64,
    pub floor: f64,
    pub fit_offset: bool,
    pub solver: MStepSolver,
}

impl Default for HingeConfig {
    fn default() -> Self {
        HingeConfig {
            c: 1.0,
            ell: 1.0,
            max_iters: 200,
            tol: 1e-6,
            floor: DEFAULT_FLOOR,
            fit_offset: true,
            solver: MStepSolver::Auto,
        }
    }
}

impl HingeConfig {
    pub fn validate(&self) -> Result<()> {
        check_positive("c", self.c)?;
        check_positive("ell", self.ell)?;
        check_positive("tol", self.tol)?;
        check_positive("floor", self.floor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticConfig {
    pub c: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub floor: f64,
    pub fit_offset: bool,
    pub solver: MStepSolver,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            c: 1.0,
            max_iters: 200,
            tol: 1e-6,
            floor: DEFAULT_FLOOR,
            fit_offset: true,
            solver: MStepSolver::Auto,
        }
    }
}

impl LogisticConfig {
    pub fn validate(&self) -> Result<()> {
        check_positive("c", self.c)?;
        check_positive("tol", self.tol)?;
        check_positive("floor", self.floor)
    }
}

/// Which fixed re-weight the expected-quadratic baseline is derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum McfVariant {
    /// Hinge IRLS with `gamma = 1/c` and `ell = 0`: weight `c/2`, target `y`.
    #[default]
    HingeForm,
    /// Logistic IRLS with `gamma = c/2`: weight `c/4`, target `y`.
    LogisticForm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McfConfig {
    pub c: f64,
    pub variant: McfVariant,
    pub fit_offset: bool,
    pub solver: MStepSolver,
}

impl Default for McfConfig {
    fn default() -> Self {
        McfConfig {
            c: 1.0,
            variant: McfVariant::HingeForm,
            fit_offset: true,
            solver: MStepSolver::Auto,
        }
    }
}

impl McfConfig {
    pub fn validate(&self) -> Result<()> {
        check_positive("c", self.c)
    }

    /// The frozen re-weight this variant corresponds to.
    pub fn gamma(&self) -> f64 {
        match self.variant {
            McfVariant::HingeForm => 1.0 / self.c,
            McfVariant::LogisticForm => self.c / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IrlsState {
    /// Re-weights from the last E-step.
    pub gammas: Vec<f64>,
    /// Regression targets `y^h` or `y^l` from the last E-step.
    pub reweighted_labels: Vec<f64>,
    /// Number of completed M-steps.
    pub iteration: usize,
    /// Collapsed objective after each E-step, starting at `w = 0`.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: ModelParams,
    pub state: IrlsState,
    pub converged: bool,
    pub wall_time: Duration,
}

impl TrainReport {
    pub fn final_objective(&self) -> Option<f64> {
        self.state.objective_trace.last().copied()
    }
}

/// Training examples as corruption moments plus per-example loss weights.
struct Corpus {
    dim: usize,
    rows: Vec<CorruptionMoments>,
    labels: Vec<f64>,
    loss_weights: Option<Vec<f64>>,
}

impl Corpus {
    fn marginalized(data: &Dataset, noise: &NoiseSpec) -> Result<Corpus> {
        noise.validate()?;
        let rows = data
            .examples()
            .par_iter()
            .map(|x| noise::moments(noise, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus {
            dim: data.dim(),
            rows,
            labels: data.labels().to_vec(),
            loss_weights: None,
        })
    }

    fn loss_weight(&self, n: usize) -> f64 {
        self.loss_weights.as_ref().map_or(1.0, |w| w[n])
    }
}

/// The parts of an IRLS iteration that differ between the hinge and the
/// logistic loss.
trait Rule: Sync {
    fn moments(&self, score: ScoreMoments, y: f64) -> ExampleMoments;
    fn gamma(&self, m: &ExampleMoments) -> f64;
    /// Least-squares weight per unit loss weight, and regression target.
    fn weight_and_target(&self, gamma: f64, y: f64) -> (f64, f64);
    /// Collapsed bound of one example, including the factor `c`.
    fn bound(&self, m: &ExampleMoments, y: f64) -> f64;
    /// How far the surrogate may sit above the collapsed bound because of the floor.
    fn floor_gap(&self, m: &ExampleMoments) -> f64;
}

struct HingeRule {
    c: f64,
    ell: f64,
    floor: f64,
}

impl Rule for HingeRule {
    fn moments(&self, score: ScoreMoments, y: f64) -> ExampleMoments {
        ExampleMoments::hinge(score, y, self.ell)
    }

    fn gamma(&self, m: &ExampleMoments) -> f64 {
        gamma_hinge(m.second, self.c, self.floor)
    }

    fn weight_and_target(&self, gamma: f64, y: f64) -> (f64, f64) {
        let c = self.c;
        (0.5 * c * c * gamma, (self.ell + 1.0 / (c * gamma)) * y)
    }

    fn bound(&self, m: &ExampleMoments, _y: f64) -> f64 {
        self.c * hinge_bound_term(m)
    }

    fn floor_gap(&self, m: &ExampleMoments) -> f64 {
        if m.second < self.floor {
            self.c * self.floor.sqrt()
        } else {
            0.0
        }
    }
}

struct LogisticRule {
    c: f64,
    floor: f64,
}

impl Rule for LogisticRule {
    fn moments(&self, score: ScoreMoments, _y: f64) -> ExampleMoments {
        ExampleMoments::logistic(score)
    }

    fn gamma(&self, m: &ExampleMoments) -> f64 {
        gamma_logistic(m.second, self.c, self.floor)
    }

    fn weight_and_target(&self, gamma: f64, y: f64) -> (f64, f64) {
        (0.5 * gamma, self.c / (2.0 * gamma) * y)
    }

    fn bound(&self, m: &ExampleMoments, y: f64) -> f64 {
        self.c * logistic_bound_term(m, y)
    }

    fn floor_gap(&self, m: &ExampleMoments) -> f64 {
        // c/4 is the exact limit; the gap is O(c s^2)
        if m.second < self.floor {
            self.c * m.second * m.second
        } else {
            0.0
        }
    }
}

/// A rule whose re-weights never change.
struct Frozen<R> {
    inner: R,
    gamma: f64,
}

impl<R: Rule> Rule for Frozen<R> {
    fn moments(&self, score: ScoreMoments, y: f64) -> ExampleMoments {
        self.inner.moments(score, y)
    }

    fn gamma(&self, _m: &ExampleMoments) -> f64 {
        self.gamma
    }

    fn weight_and_target(&self, gamma: f64, y: f64) -> (f64, f64) {
        self.inner.weight_and_target(gamma, y)
    }

    fn bound(&self, m: &ExampleMoments, y: f64) -> f64 {
        self.inner.bound(m, y)
    }

    fn floor_gap(&self, _m: &ExampleMoments) -> f64 {
        0.0
    }
}

struct LoopOptions {
    max_iters: usize,
    tol: f64,
    fit_offset: bool,
    solver: MStepSolver,
    check_monotone: bool,
}

struct EStep {
    moments: Vec<ExampleMoments>,
    gammas: Vec<f64>,
    objective: f64,
    floor_gap: f64,
}

fn e_step<R: Rule>(corpus: &Corpus, rule: &R, model: &ModelParams) -> EStep {
    let pen = model.penalized_sq_norm();
    let (moments, gammas): (Vec<_>, Vec<_>) = corpus
        .rows
        .par_iter()
        .zip(corpus.labels.par_iter())
        .map(|(row, &y)| {
            let m = rule.moments(ScoreMoments::compute(model, row, pen), y);
            (m, rule.gamma(&m))
        })
        .unzip();
    // index-ordered reduction so results do not depend on the thread count
    let mut loss = 0.0;
    let mut floor_gap = 0.0;
    for (n, (m, &y)) in moments.iter().zip(&corpus.labels).enumerate() {
        let rho = corpus.loss_weight(n);
        loss += rho * rule.bound(m, y);
        floor_gap += rho * rule.floor_gap(m);
    }
    EStep {
        moments,
        gammas,
        objective: pen + loss,
        floor_gap,
    }
}

fn run_irls<R: Rule>(corpus: &Corpus, rule: &R, opts: &LoopOptions) -> Result<TrainReport> {
    let start = Instant::now();
    let qn = LbfgsOptions::default();
    let mut model = ModelParams::zeros(corpus.dim);
    let mut trace: Vec<f64> = Vec::new();
    let mut prev_gap = 0.0;
    let mut converged = false;
    let mut iteration = 0;
    let mut estep;
    loop {
        estep = e_step(corpus, rule, &model);
        let objective = estep.objective;
        if !objective.is_finite() {
            return Err(Error::Numerical(format!(
                "collapsed objective became {objective} at iteration {iteration}"
            )));
        }
        if let Some(&prev) = trace.last() {
            let slack = MONOTONE_SLACK * prev.abs().max(1.0) + prev_gap;
            if opts.check_monotone && objective > prev + slack {
                return Err(Error::Invariant(format!(
                    "collapsed objective increased from {prev} to {objective} at iteration {iteration}"
                )));
            }
            if (prev - objective).abs() < opts.tol * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
            }
        }
        trace.push(objective);
        prev_gap = estep.floor_gap;
        if converged || iteration == opts.max_iters {
            break;
        }

        let (weights, targets): (Vec<f64>, Vec<f64>) = estep
            .gammas
            .iter()
            .zip(&corpus.labels)
            .enumerate()
            .map(|(n, (&g, &y))| {
                let (a, t) = rule.weight_and_target(g, y);
                (corpus.loss_weight(n) * a, t)
            })
            .unzip();
        let problem = WlsProblem::new(
            corpus.dim,
            opts.fit_offset,
            &corpus.rows,
            weights,
            targets,
            1.0,
        )?;
        model = wls::solve(&problem, &model, opts.solver, &qn)?;
        iteration += 1;
    }
    let reweighted_labels = estep
        .gammas
        .iter()
        .zip(&corpus.labels)
        .map(|(&g, &y)| rule.weight_and_target(g, y).1)
        .collect();
    drop(estep.moments);
    Ok(TrainReport {
        model,
        state: IrlsState {
            gammas: estep.gammas,
            reweighted_labels,
            iteration,
            objective_trace: trace,
        },
        converged,
        wall_time: start.elapsed(),
    })
}

fn hinge_loop(corpus: &Corpus, cfg: &HingeConfig) -> Result<TrainReport> {
    let rule = HingeRule {
        c: cfg.c,
        ell: cfg.ell,
        floor: cfg.floor,
    };
    run_irls(
        corpus,
        &rule,
        &LoopOptions {
            max_iters: cfg.max_iters,
            tol: cfg.tol,
            fit_offset: cfg.fit_offset,
            solver: cfg.solver,
            check_monotone: true,
        },
    )
}

/// Dropout-SVM: IRLS on the expected hinge loss under `noise`.
pub fn train_dropout_svm(data: &Dataset, noise: &NoiseSpec, cfg: &HingeConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let corpus = Corpus::marginalized(data, noise)?;
    hinge_loop(&corpus, cfg)
}

/// Dropout-Logistic: IRLS on the expected logistic loss under `noise`.
pub fn train_dropout_logistic(
    data: &Dataset,
    noise: &NoiseSpec,
    cfg: &LogisticConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    let corpus = Corpus::marginalized(data, noise)?;
    let rule = LogisticRule {
        c: cfg.c,
        floor: cfg.floor,
    };
    run_irls(
        &corpus,
        &rule,
        &LoopOptions {
            max_iters: cfg.max_iters,
            tol: cfg.tol,
            fit_offset: cfg.fit_offset,
            solver: cfg.solver,
            check_monotone: true,
        },
    )
}

fn frozen_options(fit_offset: bool, solver: MStepSolver) -> LoopOptions {
    LoopOptions {
        max_iters: 1,
        tol: f64::MIN_POSITIVE,
        fit_offset,
        solver,
        check_monotone: false,
    }
}

/// One hinge IRLS M-step from `w = 0` with every re-weight pinned to `gamma`.
///
/// Unlike [`train_dropout_svm`], `cfg.ell = 0` is accepted here.
pub fn train_frozen_hinge(
    data: &Dataset,
    noise: &NoiseSpec,
    cfg: &HingeConfig,
    gamma: f64,
) -> Result<TrainReport> {
    check_positive("c", cfg.c)?;
    check_positive("gamma", gamma)?;
    if !(cfg.ell.is_finite() && cfg.ell >= 0.0) {
        return Err(Error::Config(format!("ell must be finite and >= 0, got {}", cfg.ell)));
    }
    let corpus = Corpus::marginalized(data, noise)?;
    let rule = Frozen {
        inner: HingeRule {
            c: cfg.c,
            ell: cfg.ell,
            floor: cfg.floor,
        },
        gamma,
    };
    let mut report = run_irls(&corpus, &rule, &frozen_options(cfg.fit_offset, cfg.solver))?;
    report.converged = true;
    Ok(report)
}

/// One logistic IRLS M-step from `w = 0` with every re-weight pinned to `gamma`.
pub fn train_frozen_logistic(
    data: &Dataset,
    noise: &NoiseSpec,
    cfg: &LogisticConfig,
    gamma: f64,
) -> Result<TrainReport> {
    check_positive("c", cfg.c)?;
    check_positive("gamma", gamma)?;
    let corpus = Corpus::marginalized(data, noise)?;
    let rule = Frozen {
        inner: LogisticRule {
            c: cfg.c,
            floor: cfg.floor,
        },
        gamma,
    };
    let mut report = run_irls(&corpus, &rule, &frozen_options(cfg.fit_offset, cfg.solver))?;
    report.converged = true;
    Ok(report)
}

/// MCF-Quadratic: minimizes `||w||^2 + k c sum_n E[(w^T x~_n + b - y_n)^2]`
/// with `k = 1/2` (hinge form) or `k = 1/4` (logistic form) in one solve.
///
/// The trace holds that expected-quadratic objective at `w = 0` and at the solution.
pub fn train_mcf_quadratic(data: &Dataset, noise: &NoiseSpec, cfg: &McfConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let start = Instant::now();
    let corpus = Corpus::marginalized(data, noise)?;
    let a = match cfg.variant {
        McfVariant::HingeForm => 0.5 * cfg.c,
        McfVariant::LogisticForm => 0.25 * cfg.c,
    };
    let n = corpus.rows.len();
    let problem = WlsProblem::new(
        corpus.dim,
        cfg.fit_offset,
        &corpus.rows,
        vec![a; n],
        corpus.labels.clone(),
        1.0,
    )?;
    let zero = ModelParams::zeros(corpus.dim);
    let model = wls::solve(&problem, &zero, cfg.solver, &LbfgsOptions::default())?;
    let trace = vec![problem.objective(&zero)?, problem.objective(&model)?];
    Ok(TrainReport {
        model,
        state: IrlsState {
            gammas: vec![cfg.gamma(); n],
            reweighted_labels: corpus.labels.clone(),
            iteration: 1,
            objective_trace: trace,
        },
        converged: true,
        wall_time: start.elapsed(),
    })
}

/// Explicit corruption: `copies` sampled versions of every example, each
/// with loss weight `1 / copies`, fitted by the zero-noise hinge IRLS.
pub fn train_explicit_corruption<R: Rng + ?Sized>(
    data: &Dataset,
    noise: &NoiseSpec,
    copies: usize,
    cfg: &HingeConfig,
    rng: &mut R,
) -> Result<TrainReport> {
    cfg.validate()?;
    noise.validate()?;
    if copies == 0 {
        return Err(Error::config("number of corrupted copies must be >= 1"));
    }
    let dim = data.dim();
    let mut rows = Vec::with_capacity(data.len() * copies);
    let mut labels = Vec::with_capacity(data.len() * copies);
    for (x, y) in data.iter() {
        for _ in 0..copies {
            rows.push(CorruptionMoments::exact(noise::sample(noise, x, dim, rng)?));
            labels.push(y);
        }
    }
    let weight = 1.0 / copies as f64;
    let loss_weights = if copies == 1 {
        None
    } else {
        Some(vec![weight; rows.len()])
    };
    let corpus = Corpus {
        dim,
        rows,
        labels,
        loss_weights,
    };
    hinge_loop(&corpus, cfg)
}

/// A binary trainer together with its noise model and hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Trainer {
    DropoutSvm {
        noise: NoiseSpec,
        config: HingeConfig,
    },
    DropoutLogistic {
        noise: NoiseSpec,
        config: LogisticConfig,
    },
    McfQuadratic {
        noise: NoiseSpec,
        config: McfConfig,
    },
    Explicit {
        noise: NoiseSpec,
        copies: usize,
        config: HingeConfig,
        seed: u64,
    },
}

impl Trainer {
    pub const NAMES: [&'static str; 4] = ["dropout-svm", "dropout-logistic", "mcf-quadratic", "explicit"];

    /// Default configuration of the trainer called `name`.
    pub fn from_name(name: &str, noise: NoiseSpec) -> Result<Trainer> {
        Ok(match name {
            "dropout-svm" => Trainer::DropoutSvm {
                noise,
                config: HingeConfig::default(),
            },
            "dropout-logistic" => Trainer::DropoutLogistic {
                noise,
                config: LogisticConfig::default(),
            },
            "mcf-quadratic" => Trainer::McfQuadratic {
                noise,
                config: McfConfig::default(),
            },
            "explicit" => Trainer::Explicit {
                noise,
                copies: 1,
                config: HingeConfig::default(),
                seed: 0,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown trainer `{other}` (expected one of {})",
                    Trainer::NAMES.join(", ")
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Trainer::DropoutSvm { .. } => "dropout-svm",
            Trainer::DropoutLogistic { .. } => "dropout-logistic",
            Trainer::McfQuadratic { .. } => "mcf-quadratic",
            Trainer::Explicit { .. } => "explicit",
        }
    }

    pub fn noise(&self) -> NoiseSpec {
        match self {
            Trainer::DropoutSvm { noise, .. }
            | Trainer::DropoutLogistic { noise, .. }
            | Trainer::McfQuadratic { noise, .. }
            | Trainer::Explicit { noise, .. } => *noise,
        }
    }

    pub fn c(&self) -> f64 {
        match self {
            Trainer::DropoutSvm { config, .. } | Trainer::Explicit { config, .. } => config.c,
            Trainer::DropoutLogistic { config, .. } => config.c,
            Trainer::McfQuadratic { config, .. } => config.c,
        }
    }

    /// Margin cost, for the hinge-based trainers.
    pub fn ell(&self) -> Option<f64> {
        match self {
            Trainer::DropoutSvm { config, .. } | Trainer::Explicit { config, .. } => Some(config.ell),
            _ => None,
        }
    }

    pub fn fit_offset(&self) -> bool {
        match self {
            Trainer::DropoutSvm { config, .. } | Trainer::Explicit { config, .. } => config.fit_offset,
            Trainer::DropoutLogistic { config, .. } => config.fit_offset,
            Trainer::McfQuadratic { config, .. } => config.fit_offset,
        }
    }

    pub fn with_noise(&self, noise: NoiseSpec) -> Trainer {
        let mut out = self.clone();
        match &mut out {
            Trainer::DropoutSvm { noise: n, .. }
            | Trainer::DropoutLogistic { noise: n, .. }
            | Trainer::McfQuadratic { noise: n, .. }
            | Trainer::Explicit { noise: n, .. } => *n = noise,
        }
        out
    }

    pub fn with_c(&self, c: f64) -> Trainer {
        let mut out = self.clone();
        match &mut out {
            Trainer::DropoutSvm { config, .. } | Trainer::Explicit { config, .. } => config.c = c,
            Trainer::DropoutLogistic { config, .. } => config.c = c,
            Trainer::McfQuadratic { config, .. } => config.c = c,
        }
        out
    }

    /// Replaces `c` and the noise level (see [`NoiseSpec::with_level`]).
    pub fn with_params(&self, c: f64, level: f64) -> Result<Trainer> {
        Ok(self.with_c(c).with_noise(self.noise().with_level(level)?))
    }

    pub fn validate(&self) -> Result<()> {
        self.noise().validate()?;
        match self {
            Trainer::DropoutSvm { config, .. } => config.validate(),
            Trainer::DropoutLogistic { config, .. } => config.validate(),
            Trainer::McfQuadratic { config, .. } => config.validate(),
            Trainer::Explicit { config, copies, .. } => {
                if *copies == 0 {
                    return Err(Error::config("number of corrupted copies must be >= 1"));
                }
                config.validate()
            }
        }
    }

    pub fn fit(&self, data: &Dataset) -> Result<TrainReport> {
        match self {
            Trainer::DropoutSvm { noise, config } => train_dropout_svm(data, noise, config),
            Trainer::DropoutLogistic { noise, config } => train_dropout_logistic(data, noise, config),
            Trainer::McfQuadratic { noise, config } => train_mcf_quadratic(data, noise, config),
            Trainer::Explicit {
                noise,
                copies,
                config,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                train_explicit_corruption(data, noise, *copies, config, &mut rng)
            }
        }
    }
}

/// One binary model per class; predicts the class with the largest decision value.
#[derive(Debug, Clone, PartialEq)]
pub struct OvaModel {
    classes: Vec<usize>,
    models: Vec<ModelParams>,
}

impl OvaModel {
    pub fn new(classes: Vec<usize>, models: Vec<ModelParams>) -> Result<Self> {
        if classes.len() != models.len() {
            return Err(Error::Dimension {
                expected: classes.len(),
                found: models.len(),
            });
        }
        if classes.len() < 2 {
            return Err(Error::config("one-vs-all needs at least two classes"));
        }
        if models.iter().any(|m| m.dim() != models[0].dim()) {
            return Err(Error::InvalidData("class models differ in dimension".into()));
        }
        Ok(OvaModel { classes, models })
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn models(&self) -> &[ModelParams] {
        &self.models
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    pub fn decision_values(&self, x: &SparseVector) -> Result<Vec<f64>> {
        self.models.iter().map(|m| m.decision(x)).collect()
    }

    /// Arg-max class; ties go to the earliest class in [`OvaModel::classes`].
    pub fn predict(&self, x: &SparseVector) -> Result<usize> {
        let scores = self.decision_values(x)?;
        let mut best = 0;
        for (k, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = k;
            }
        }
        Ok(self.classes[best])
    }
}

/// One-vs-all with the same trainer for every class.
pub fn train_one_vs_all(data: &MulticlassDataset, trainer: &Trainer) -> Result<OvaModel> {
    let trainers = vec![trainer.clone(); data.n_classes()];
    train_one_vs_all_per_class(data, &trainers)
}

/// One-vs-all with `trainers[k]` fitting class `k` against the rest.
pub fn train_one_vs_all_per_class(data: &MulticlassDataset, trainers: &[Trainer]) -> Result<OvaModel> {
    let k = data.n_classes();
    if k < 2 {
        return Err(Error::config("one-vs-all needs at least two classes"));
    }
    if trainers.len() != k {
        return Err(Error::Config(format!(
            "expected {k} per-class trainers, got {}",
            trainers.len()
        )));
    }
    if let Some(missing) = data.class_counts().iter().position(|&n| n == 0) {
        return Err(Error::Config(format!("class {missing} has no training examples")));
    }
    let models = (0..k)
        .into_par_iter()
        .map(|class| {
            let binary = data.one_vs_rest(class)?;
            Ok(trainers[class].fit(&binary)?.model)
        })
        .collect::<Result<Vec<_>>>()?;
    OvaModel::new((0..k).collect(), models)
}
