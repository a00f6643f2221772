//! Error rates, test-time feature deletion, cross-validation and the
//! deletion ("nightmare at test time") protocol.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::{Dataset, MulticlassDataset, SparseVector};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::trainers::{OvaModel, Trainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassErrors {
    pub class: usize,
    pub errors: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub error_rate: f64,
    pub n_test: usize,
    pub n_errors: usize,
    /// Filled in for multiclass evaluation only.
    pub per_class_errors: Option<Vec<ClassErrors>>,
}

impl EvalResult {
    fn from_counts(n_errors: usize, n_test: usize) -> Result<Self> {
        if n_test == 0 {
            return Err(Error::InvalidData("empty test set".into()));
        }
        Ok(EvalResult {
            error_rate: n_errors as f64 / n_test as f64,
            n_test,
            n_errors,
            per_class_errors: None,
        })
    }
}

fn check_test_dim(model_dim: usize, test_dim: usize) -> Result<()> {
    if test_dim > model_dim {
        return Err(Error::Dimension {
            expected: model_dim,
            found: test_dim,
        });
    }
    Ok(())
}

pub fn evaluate(model: &ModelParams, test: &Dataset) -> Result<EvalResult> {
    check_test_dim(model.dim(), test.dim())?;
    let mut errors = 0;
    for (x, y) in test.iter() {
        if model.predict(x)? != y {
            errors += 1;
        }
    }
    EvalResult::from_counts(errors, test.len())
}

pub fn evaluate_multiclass(model: &OvaModel, test: &MulticlassDataset) -> Result<EvalResult> {
    check_test_dim(model.dim(), test.dim())?;
    let mut per_class: Vec<ClassErrors> = (0..test.n_classes())
        .map(|class| ClassErrors {
            class,
            errors: 0,
            total: 0,
        })
        .collect();
    let mut errors = 0;
    for (x, &y) in test.examples().iter().zip(test.labels()) {
        let wrong = model.predict(x)? != y;
        per_class[y].total += 1;
        if wrong {
            per_class[y].errors += 1;
            errors += 1;
        }
    }
    let mut result = EvalResult::from_counts(errors, test.len())?;
    result.per_class_errors = Some(per_class);
    Ok(result)
}

fn check_fraction(fraction: f64) -> Result<()> {
    if (0.0..=1.0).contains(&fraction) {
        Ok(())
    } else {
        Err(Error::Config(format!("deletion fraction must be in [0,1], got {fraction}")))
    }
}

fn delete_entries<R: Rng + ?Sized>(x: &SparseVector, fraction: f64, rng: &mut R) -> SparseVector {
    x.retain(|_, _| rng.random::<f64>() >= fraction)
}

/// Zeroes every stored feature value independently with probability `fraction`.
pub fn delete_features<R: Rng + ?Sized>(test: &Dataset, fraction: f64, rng: &mut R) -> Result<Dataset> {
    check_fraction(fraction)?;
    Ok(test.map_examples(|x| delete_entries(x, fraction, rng)))
}

pub fn delete_features_multiclass<R: Rng + ?Sized>(
    test: &MulticlassDataset,
    fraction: f64,
    rng: &mut R,
) -> Result<MulticlassDataset> {
    check_fraction(fraction)?;
    Ok(test.map_examples(|x| delete_entries(x, fraction, rng)))
}

/// Deletion fractions to evaluate, and the seed for the deletion masks.
#[derive(Debug, Clone, PartialEq)]
pub struct DeletionSchedule {
    fractions: Vec<f64>,
    seed: u64,
}

impl DeletionSchedule {
    pub fn new(fractions: Vec<f64>, seed: u64) -> Result<Self> {
        if fractions.is_empty() {
            return Err(Error::config("deletion schedule is empty"));
        }
        for &f in &fractions {
            check_fraction(f)?;
        }
        if fractions.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::config("deletion fractions must be sorted"));
        }
        Ok(DeletionSchedule { fractions, seed })
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Hyper-parameter grid: `c` values, noise levels (see
/// [`crate::NoiseSpec::with_level`]), fold count and split seed.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub c_grid: Vec<f64>,
    pub levels: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.c_grid.is_empty() || self.levels.is_empty() {
            return Err(Error::config("hyper-parameter grids must be non-empty"));
        }
        if let Some(c) = self.c_grid.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::Config(format!("grid value c={c} must be finite and > 0")));
        }
        if let Some(q) = self.levels.iter().find(|q| !(q.is_finite() && **q >= 0.0)) {
            return Err(Error::Config(format!("grid noise level {q} must be finite and >= 0")));
        }
        if self.folds < 2 {
            return Err(Error::config("cross-validation needs at least 2 folds"));
        }
        Ok(())
    }

    /// Grid points in `(c, level)` order, levels outermost.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.levels
            .iter()
            .flat_map(|&q| self.c_grid.iter().map(move |&c| (c, q)))
            .collect()
    }
}

/// Independent seed for the `k`-th sub-task of `seed` (splitmix64 step).
pub fn sub_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed ^ k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Label-stratified fold index for every example.
///
/// Each class is shuffled and dealt round-robin, continuing from the fold
/// where the previous class stopped, so per-fold class counts differ by at
/// most one and fold sizes by at most one.
pub fn stratified_folds(labels: &[f64], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || folds > labels.len() {
        return Err(Error::Config(format!(
            "fold count {folds} must be in 2..={}",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for class in [1.0, -1.0] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next;
            next = (next + 1) % folds;
        }
    }
    Ok(assignment)
}

fn has_both_classes(labels: &[f64]) -> bool {
    labels.iter().any(|&y| y > 0.0) && labels.iter().any(|&y| y < 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvRow {
    pub c: f64,
    pub level: f64,
    pub fold_errors: Vec<f64>,
    pub mean_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub best_c: f64,
    pub best_level: f64,
    pub best_error: f64,
    /// One row per grid point, in [`GridSpec::points`] order.
    pub table: Vec<CvRow>,
}

impl CvOutcome {
    pub fn best_trainer(&self, trainer: &Trainer) -> Result<Trainer> {
        trainer.with_params(self.best_c, self.best_level)
    }
}

/// Lowest error wins; ties go to the smaller level, then the smaller `c`.
fn pick_best(candidates: impl IntoIterator<Item = (f64, f64, f64)>) -> Option<(f64, f64, f64)> {
    candidates.into_iter().fold(None, |best, cand| match best {
        None => Some(cand),
        Some(b) => {
            let key = |(c, q, e): (f64, f64, f64)| (e, q, c);
            if key(cand).partial_cmp(&key(b)) == Some(std::cmp::Ordering::Less) {
                Some(cand)
            } else {
                Some(b)
            }
        }
    })
}

/// Stratified k-fold grid search; the score of a grid point is its mean fold error.
pub fn cross_validate(trainer: &Trainer, data: &Dataset, grid: &GridSpec) -> Result<CvOutcome> {
    grid.validate()?;
    let assignment = stratified_folds(data.labels(), grid.folds, grid.seed)?;
    let mut splits = Vec::with_capacity(grid.folds);
    for fold in 0..grid.folds {
        let (held, kept): (Vec<usize>, Vec<usize>) =
            (0..data.len()).partition(|&i| assignment[i] == fold);
        let train = data.subset(&kept)?;
        if !has_both_classes(train.labels()) {
            return Err(Error::Config(format!(
                "stratification failed: training split of fold {fold} lacks a class"
            )));
        }
        splits.push((train, data.subset(&held)?));
    }
    let points = grid.points();
    let trainers = points
        .iter()
        .map(|&(c, q)| trainer.with_params(c, q))
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..grid.folds).map(move |f| (p, f)))
        .collect();
    let errors = tasks
        .par_iter()
        .map(|&(p, f)| {
            let (train, held) = &splits[f];
            let model = trainers[p].fit(train)?.model;
            Ok(evaluate(&model, held)?.error_rate)
        })
        .collect::<Result<Vec<f64>>>()?;
    let table: Vec<CvRow> = points
        .iter()
        .enumerate()
        .map(|(p, &(c, level))| {
            let fold_errors = errors[p * grid.folds..(p + 1) * grid.folds].to_vec();
            let mean_error = fold_errors.iter().sum::<f64>() / grid.folds as f64;
            CvRow {
                c,
                level,
                fold_errors,
                mean_error,
            }
        })
        .collect();
    let (best_c, best_level, best_error) =
        pick_best(table.iter().map(|r| (r.c, r.level, r.mean_error))).expect("grid is non-empty");
    Ok(CvOutcome {
        best_c,
        best_level,
        best_error,
        table,
    })
}

/// A named trainer in the deletion protocol; `levels` overrides the grid's
/// noise levels (e.g. `[0.0]` for a plain SVM).
#[derive(Debug, Clone, PartialEq)]
pub struct NightmareEntry {
    pub name: String,
    pub trainer: Trainer,
    pub levels: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NightmarePoint {
    pub name: String,
    pub trainer: Trainer,
    pub fraction: f64,
    pub c: f64,
    pub level: f64,
    pub validation_error: f64,
    pub test: EvalResult,
}

/// Share of the training set held out for selection in [`nightmare_curve`].
pub const VALIDATION_SHARE: f64 = 0.2;

/// Stratified `share` / `1 - share` split of `data` (held-out part first).
pub fn holdout_split(data: &Dataset, share: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held = Vec::new();
    let mut kept = Vec::new();
    for class in [1.0, -1.0] {
        let mut members: Vec<usize> = (0..data.len()).filter(|&i| data.labels()[i] == class).collect();
        members.shuffle(&mut rng);
        let n_held = (share * members.len() as f64).round() as usize;
        held.extend_from_slice(&members[..n_held]);
        kept.extend_from_slice(&members[n_held..]);
    }
    held.sort_unstable();
    kept.sort_unstable();
    if held.is_empty() || !has_both_classes(&kept.iter().map(|&i| data.labels()[i]).collect::<Vec<_>>()) {
        return Err(Error::config("training set too small for a validation split"));
    }
    Ok((data.subset(&held)?, data.subset(&kept)?))
}

/// Test error against deletion fraction for each entry.
///
/// For every fraction, each entry's `(c, level)` is chosen on a 20%
/// validation split deleted at that fraction, refitted on the full training
/// set and scored on the deleted test set. Deletion masks depend only on the
/// schedule seed and the fraction index, so all entries see the same data.
pub fn nightmare_curve(
    entries: &[NightmareEntry],
    train: &Dataset,
    test: &Dataset,
    sched: &DeletionSchedule,
    grid: &GridSpec,
) -> Result<Vec<NightmarePoint>> {
    grid.validate()?;
    let (validation, fit_split) = holdout_split(train, VALIDATION_SHARE, grid.seed)?;
    let mut tasks = Vec::new();
    for (e, entry) in entries.iter().enumerate() {
        let levels = entry.levels.as_ref().unwrap_or(&grid.levels);
        for &q in levels {
            for &c in &grid.c_grid {
                tasks.push((e, c, q, entry.trainer.with_params(c, q)?));
            }
        }
    }
    // models for the split and the full training set do not depend on the fraction
    let fitted = tasks
        .par_iter()
        .map(|(_, _, _, t)| Ok((t.fit(&fit_split)?.model, t.fit(train)?.model)))
        .collect::<Result<Vec<(ModelParams, ModelParams)>>>()?;

    let mut out = Vec::with_capacity(entries.len() * sched.fractions().len());
    for (k, &fraction) in sched.fractions().iter().enumerate() {
        let mut val_rng = ChaCha8Rng::seed_from_u64(sub_seed(sched.seed(), 2 * k as u64));
        let mut test_rng = ChaCha8Rng::seed_from_u64(sub_seed(sched.seed(), 2 * k as u64 + 1));
        let val_deleted = delete_features(&validation, fraction, &mut val_rng)?;
        let test_deleted = delete_features(test, fraction, &mut test_rng)?;
        let val_errors = fitted
            .par_iter()
            .map(|(m, _)| Ok(evaluate(m, &val_deleted)?.error_rate))
            .collect::<Result<Vec<f64>>>()?;
        for (e, entry) in entries.iter().enumerate() {
            let best = pick_best(
                tasks
                    .iter()
                    .zip(&val_errors)
                    .filter(|((te, ..), _)| *te == e)
                    .map(|((_, c, q, _), &err)| (*c, *q, err)),
            );
            let Some((c, level, validation_error)) = best else {
                return Err(Error::Config(format!("entry `{}` has an empty grid", entry.name)));
            };
            let idx = tasks
                .iter()
                .position(|(te, tc, tq, _)| *te == e && *tc == c && *tq == level)
                .expect("selected point is in the grid");
            out.push(NightmarePoint {
                name: entry.name.clone(),
                trainer: tasks[idx].3.clone(),
                fraction,
                c,
                level,
                validation_error,
                test: evaluate(&fitted[idx].1, &test_deleted)?,
            });
        }
    }
    Ok(out)
}
