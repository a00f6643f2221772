use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use dropsvm_core::eval::{delete_features_multiclass, sub_seed};
use dropsvm_core::experiment::{self, ResultRow};
use dropsvm_core::synth::{blobs, blobs_multiclass, redundant_sparse};
use dropsvm_core::trainers::{HingeConfig, TrainReport};
use dropsvm_core::{
    delete_features, evaluate, evaluate_multiclass, read_svmlight_file, read_svmlight_multiclass_file,
    train_one_vs_all, write_svmlight, write_svmlight_multiclass, Dataset, DeletionSchedule, Error,
    GridSpec, MulticlassDataset, NightmareEntry, NoiseSpec, Result, Trainer,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model_file::{self, Classifier, ModelHeader};
use crate::settings::{parse_list, ConfigFile};
use crate::{EvalArgs, ExperimentArgs, Protocol, SynthArgs, SynthKind, TrainArgs, TrainerArgs};

const DEFAULT_SWEEP_LEVELS: &str = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
const DEFAULT_COPIES: &str = "1,4,16,64,256";
const DEFAULT_DELETION: &str = "0,0.25,0.5,0.75,0.9";
const DEFAULT_NIGHTMARE_C: &str = "0.0001,0.001,0.01,0.1,1";
const DEFAULT_NIGHTMARE_LEVELS: &str = "0.1,0.25,0.5,0.75,0.9";

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| config_error(format!("missing required setting `--{flag}`")))
}

/// `kind`, or `{kind, level}` as written in config files.
fn split_noise(raw: &str) -> (String, Option<String>) {
    let inner = raw.trim().trim_start_matches('{').trim_end_matches('}');
    let mut parts = inner.splitn(2, ',');
    let kind = parts.next().unwrap_or_default().trim().to_ascii_lowercase();
    let level = parts.next().map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
    (kind, level)
}

pub fn noise_spec(args: &TrainerArgs, cfg: &ConfigFile) -> Result<NoiseSpec> {
    let raw = cfg.get_or(args.noise.clone(), "noise", "dropout".to_string())?;
    let (kind, inline) = split_noise(&raw);
    let inline: Option<f64> = match inline {
        None => None,
        Some(s) => Some(
            s.parse()
                .map_err(|_| config_error(format!("noise level: cannot parse `{s}`")))?,
        ),
    };
    let spec = match kind.as_str() {
        "none" => NoiseSpec::None,
        "dropout" | "blankout" => NoiseSpec::Dropout {
            q: cfg.get(args.q, "q")?.or(inline).unwrap_or(0.5),
        },
        "gaussian" => NoiseSpec::Gaussian {
            sigma2: cfg.get(args.sigma2, "sigma2")?.or(inline).unwrap_or(1.0),
        },
        "laplace" => NoiseSpec::Laplace {
            scale: cfg.get(args.scale, "scale")?.or(inline).unwrap_or(1.0),
        },
        "poisson" => NoiseSpec::Poisson,
        other => {
            return Err(config_error(format!(
                "unknown noise `{other}` (expected none, dropout, gaussian, laplace or poisson)"
            )))
        }
    };
    spec.validate()?;
    Ok(spec)
}

/// Builds and validates the trainer called `name` from flags and config.
pub fn build_trainer(name: &str, args: &TrainerArgs, cfg: &ConfigFile, seed: u64) -> Result<Trainer> {
    let noise = noise_spec(args, cfg)?;
    let c = cfg.get_or(args.c, "c", 1.0)?;
    let ell = cfg.get_or(args.ell, "ell", 1.0)?;
    let max_iters = cfg.get(args.max_iters, "max-iters")?;
    let tol = cfg.get(args.tol, "tol")?;
    let fit_offset = !cfg.get_bool(args.no_offset, "no-offset")?;
    let copies = cfg.get_or(args.copies.clone(), "M", "1".to_string())?;
    let mut trainer = Trainer::from_name(name, noise)?.with_c(c);
    match &mut trainer {
        Trainer::DropoutSvm { config, .. } | Trainer::Explicit { config, .. } => {
            config.ell = ell;
            config.fit_offset = fit_offset;
            config.max_iters = max_iters.unwrap_or(config.max_iters);
            config.tol = tol.unwrap_or(config.tol);
        }
        Trainer::DropoutLogistic { config, .. } => {
            config.fit_offset = fit_offset;
            config.max_iters = max_iters.unwrap_or(config.max_iters);
            config.tol = tol.unwrap_or(config.tol);
        }
        Trainer::McfQuadratic { config, .. } => config.fit_offset = fit_offset,
    }
    if let Trainer::Explicit { copies: m, seed: s, .. } = &mut trainer {
        *m = copies
            .trim()
            .parse()
            .map_err(|_| config_error(format!("--M: expected a single count, got `{copies}`")))?;
        *s = seed;
    }
    trainer.validate()?;
    Ok(trainer)
}

fn check_file(path: &Path, flag: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Io(io::Error::new(
            io::ErrorKind::NotFound,
            format!("--{flag}: no such file `{}`", path.display()),
        )))
    }
}

fn header_for(trainer: &Trainer) -> ModelHeader {
    let noise = trainer.noise();
    ModelHeader {
        trainer: trainer.name().to_string(),
        noise: noise.kind_name().to_string(),
        q: noise.level(),
        c: trainer.c(),
        ell: trainer.ell(),
        offset: trainer.fit_offset(),
    }
}

/// Per-feature factors mapping every column into `[-1, 1]`.
fn scale_factors(max_abs: &[f64]) -> Vec<f64> {
    max_abs.iter().map(|&m| if m > 0.0 { 1.0 / m } else { 1.0 }).collect()
}

fn log_report(out: &mut String, label: &str, report: &TrainReport) {
    use std::fmt::Write as _;
    let _ = writeln!(out, "# {label}");
    let _ = writeln!(out, "iterations {}", report.state.iteration);
    let _ = writeln!(out, "converged {}", report.converged);
    for (i, obj) in report.state.objective_trace.iter().enumerate() {
        let _ = writeln!(out, "{i} {obj}");
    }
}

fn log_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".log");
    PathBuf::from(s)
}

pub fn train(args: &TrainArgs, cfg: &ConfigFile) -> Result<()> {
    let seed = cfg.get_or(args.seed, "seed", 0)?;
    let name = cfg.get_or(args.trainer.trainer.clone(), "trainer", "dropout-svm".to_string())?;
    let trainer = build_trainer(&name, &args.trainer, cfg, seed)?;
    let data_path: PathBuf = require(cfg.get(args.data.clone(), "data")?, "data")?;
    let out: PathBuf = require(cfg.get(args.out.clone(), "out")?, "out")?;
    let multiclass = cfg.get_bool(args.multiclass, "multiclass")?;
    let scale = cfg.get_bool(args.scale_features, "scale-features")?;
    check_file(&data_path, "data")?;

    let mut log = String::new();
    let model = if multiclass {
        let data = read_svmlight_multiclass_file(&data_path, None)?;
        let factors = scale.then(|| scale_factors(&data.max_abs()));
        let train_set = match &factors {
            Some(f) => data.map_examples(|x| x.scaled(f)),
            None => data,
        };
        let ova = train_one_vs_all(&train_set, &trainer)?;
        let ova = match &factors {
            Some(f) => dropsvm_core::OvaModel::new(
                ova.classes().to_vec(),
                ova.models().iter().map(|m| m.unscale(f)).collect::<Result<_>>()?,
            )?,
            None => ova,
        };
        {
            use std::fmt::Write as _;
            let _ = writeln!(log, "trainer {}\nclasses {}", trainer.name(), ova.classes().len());
        }
        Classifier::Multiclass(ova)
    } else {
        let data = read_svmlight_file(&data_path, None)?;
        let factors = scale.then(|| scale_factors(&data.max_abs()));
        let report = match &factors {
            Some(f) => trainer.fit(&data.map_examples(|x| x.scaled(f)))?,
            None => trainer.fit(&data)?,
        };
        {
            use std::fmt::Write as _;
            let _ = writeln!(log, "trainer {}\nnoise {}", trainer.name(), trainer.noise());
        }
        log_report(&mut log, "objective trace", &report);
        eprintln!(
            "trained {} on {} examples in {:.3}s ({} iterations, converged {})",
            trainer.name(),
            data.len(),
            report.wall_time.as_secs_f64(),
            report.state.iteration,
            report.converged
        );
        let model = report.model;
        Classifier::Binary(match &factors {
            Some(f) => model.unscale(f)?,
            None => model,
        })
    };
    model_file::save(&out, &header_for(&trainer), &model)?;
    fs::write(log_path(&out), log)?;
    Ok(())
}

/// Appends `rows` to `path`, writing the header only for a new or empty file.
fn append_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let expected = experiment::header(rows).join(",");
    let fresh = match File::open(path) {
        Err(e) if e.kind() == io::ErrorKind::NotFound => true,
        Err(e) => return Err(e.into()),
        Ok(f) => {
            let mut first = String::new();
            BufReader::new(f).read_line(&mut first)?;
            let first = first.trim_end();
            if !first.is_empty() && first != expected {
                return Err(Error::InvalidData(format!(
                    "`{}` has header `{first}`, expected `{expected}`",
                    path.display()
                )));
            }
            first.is_empty()
        }
    };
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    experiment::write_csv(rows, fresh, BufWriter::new(file))
}

pub fn eval(args: &EvalArgs, cfg: &ConfigFile) -> Result<()> {
    let deletion = cfg.get_or(args.deletion, "deletion", 0.0)?;
    if !(0.0..=1.0).contains(&deletion) {
        return Err(config_error(format!("deletion fraction must be in [0,1], got {deletion}")));
    }
    let seed = cfg.get_or(args.seed, "seed", 0)?;
    let model_path: PathBuf = require(cfg.get(args.model.clone(), "model")?, "model")?;
    let test_path: PathBuf = require(cfg.get(args.test.clone(), "test")?, "test")?;
    let out: Option<PathBuf> = cfg.get(args.out.clone(), "out")?;
    check_file(&model_path, "model")?;
    check_file(&test_path, "test")?;

    let (header, model) = model_file::load(&model_path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let result = match &model {
        Classifier::Binary(m) => {
            let test = read_svmlight_file(&test_path, Some(m.dim()))?;
            evaluate(m, &delete_features(&test, deletion, &mut rng)?)?
        }
        Classifier::Multiclass(ova) => {
            let test = read_svmlight_multiclass_file(&test_path, Some(ova.dim()))?;
            evaluate_multiclass(ova, &delete_features_multiclass(&test, deletion, &mut rng)?)?
        }
    };
    println!("error {} ({}/{})", result.error_rate, result.n_errors, result.n_test);
    if let Some(per_class) = &result.per_class_errors {
        for c in per_class {
            println!("class {} errors {}/{}", c.class, c.errors, c.total);
        }
    }
    if let Some(out) = out {
        let row = ResultRow {
            trainer: header.trainer,
            noise: header.noise,
            q: header.q,
            c: header.c,
            ell: header.ell,
            deletion,
            error: result.error_rate,
            n_test: result.n_test,
            seed,
            copies: None,
        };
        append_rows(&out, &[row])?;
    }
    Ok(())
}

fn list<T: std::str::FromStr>(cfg: &ConfigFile, flag: &Option<String>, key: &str, default: &str) -> Result<Vec<T>> {
    let raw = cfg.get_or(flag.clone(), key, default.to_string())?;
    let values = parse_list(&raw, key)?;
    if values.is_empty() {
        return Err(config_error(format!("--{key} must list at least one value")));
    }
    Ok(values)
}

fn write_plot(path: &Path, rows: &[ResultRow], key: impl Fn(&ResultRow) -> f64) -> Result<()> {
    experiment::write_gnuplot(rows, key, BufWriter::new(File::create(path)?))
}

pub fn experiment(protocol: Protocol, args: &ExperimentArgs, cfg: &ConfigFile) -> Result<()> {
    let seed = cfg.get_or(args.seed, "seed", 0)?;
    let folds = cfg.get_or(args.folds, "folds", 5)?;
    let names = cfg.get_or(
        args.trainer.trainer.clone(),
        "trainer",
        "dropout-svm,dropout-logistic,mcf-quadratic".to_string(),
    )?;
    let names: Vec<String> = names.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    let out: Option<PathBuf> = cfg.get(args.out.clone(), "out")?;
    let plot: Option<PathBuf> = cfg.get(args.plot.clone(), "plot")?;

    // everything that can be validated without touching the data
    enum Plan {
        Sweep(Vec<Trainer>, GridSpec),
        Explicit(NoiseSpec, HingeConfig, Vec<usize>),
        Nightmare(Vec<NightmareEntry>, DeletionSchedule, GridSpec),
    }
    let plan = match protocol {
        Protocol::BinarySweep => {
            let c = cfg.get_or(args.trainer.c, "c", 1.0)?;
            let grid = GridSpec {
                c_grid: list(cfg, &args.grid_c, "grid-c", &c.to_string())?,
                levels: list(cfg, &args.grid_q, "grid-q", DEFAULT_SWEEP_LEVELS)?,
                folds,
                seed,
            };
            grid.validate()?;
            let trainers = names
                .iter()
                .map(|n| build_trainer(n, &args.trainer, cfg, seed))
                .collect::<Result<Vec<_>>>()?;
            for t in &trainers {
                for &q in &grid.levels {
                    t.with_params(grid.c_grid[0], q)?.validate()?;
                }
            }
            Plan::Sweep(trainers, grid)
        }
        Protocol::ExplicitVsImplicit => {
            let base = build_trainer("dropout-svm", &args.trainer, cfg, seed)?;
            let Trainer::DropoutSvm { noise, config } = base else {
                unreachable!("dropout-svm builds a DropoutSvm trainer")
            };
            let copies: Vec<usize> = list(cfg, &args.trainer.copies, "M", DEFAULT_COPIES)?;
            if copies.contains(&0) {
                return Err(config_error("number of corrupted copies must be >= 1"));
            }
            Plan::Explicit(noise, config, copies)
        }
        Protocol::Nightmare => {
            let grid = GridSpec {
                c_grid: list(cfg, &args.grid_c, "grid-c", DEFAULT_NIGHTMARE_C)?,
                levels: list(cfg, &args.grid_q, "grid-q", DEFAULT_NIGHTMARE_LEVELS)?,
                folds,
                seed,
            };
            grid.validate()?;
            let sched = DeletionSchedule::new(list(cfg, &args.deletion, "deletion", DEFAULT_DELETION)?, seed)?;
            let mut entries = Vec::new();
            for name in &names {
                let entry = if name == "svm" {
                    NightmareEntry {
                        name: "svm".into(),
                        trainer: build_trainer("dropout-svm", &args.trainer, cfg, seed)?,
                        levels: Some(vec![0.0]),
                    }
                } else {
                    NightmareEntry {
                        name: name.clone(),
                        trainer: build_trainer(name, &args.trainer, cfg, seed)?,
                        levels: None,
                    }
                };
                entries.push(entry);
            }
            if !names.iter().any(|n| n == "svm") {
                entries.insert(
                    0,
                    NightmareEntry {
                        name: "svm".into(),
                        trainer: build_trainer("dropout-svm", &args.trainer, cfg, seed)?,
                        levels: Some(vec![0.0]),
                    },
                );
            }
            Plan::Nightmare(entries, sched, grid)
        }
    };

    let data_path: PathBuf = require(cfg.get(args.data.clone(), "data")?, "data")?;
    let test_path: PathBuf = require(cfg.get(args.test.clone(), "test")?, "test")?;
    check_file(&data_path, "data")?;
    check_file(&test_path, "test")?;
    let (train, test) = load_pair(&data_path, &test_path)?;

    let (rows, key): (Vec<ResultRow>, fn(&ResultRow) -> f64) = match plan {
        Plan::Sweep(trainers, grid) => (
            experiment::binary_sweep(&trainers, &train, &test, &grid)?,
            |r| r.q.unwrap_or(0.0),
        ),
        Plan::Explicit(noise, config, copies) => {
            let rows = experiment::explicit_vs_implicit(&noise, &config, &copies, &train, &test, seed)?;
            (rows, |r| match r.copies {
                Some(Some(m)) => m as f64,
                _ => f64::NAN,
            })
        }
        Plan::Nightmare(entries, sched, grid) => (
            experiment::nightmare(&entries, &train, &test, &sched, &grid)?,
            |r| r.deletion,
        ),
    };

    match &out {
        Some(path) => {
            experiment::write_csv(&rows, true, BufWriter::new(File::create(path)?))?;
        }
        None => experiment::write_csv(&rows, true, io::stdout().lock())?,
    }
    if let Some(path) = plot {
        // the reference row is plotted at the largest M
        let largest = rows
            .iter()
            .filter_map(|r| r.copies.flatten())
            .max()
            .map(|m| m as f64);
        write_plot(&path, &rows, |r| {
            let x = key(r);
            if x.is_nan() {
                largest.unwrap_or(0.0)
            } else {
                x
            }
        })?;
    }
    Ok(())
}

fn load_pair(train: &Path, test: &Path) -> Result<(Dataset, Dataset)> {
    let a = read_svmlight_file(train, None)?;
    let b = read_svmlight_file(test, Some(a.dim()))?;
    let dim = a.dim().max(b.dim());
    Ok((a.with_dim(dim)?, b.with_dim(dim)?))
}

fn write_binary(path: &Path, data: &Dataset) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_svmlight(data, &mut out)?;
    out.flush()?;
    Ok(())
}

fn write_multi(path: &Path, data: &MulticlassDataset) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_svmlight_multiclass(data, &mut out)?;
    out.flush()?;
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn synth(kind: SynthKind, args: &SynthArgs, cfg: &ConfigFile) -> Result<()> {
    let n = cfg.get_or(args.n, "n", 1000)?;
    let n_test = cfg.get_or(args.n_test, "n-test", n)?;
    let dim = cfg.get_or(args.dim, "dim", if kind == SynthKind::Blobs { 10 } else { 200 })?;
    let seed = cfg.get_or(args.seed, "seed", 0)?;
    let classes = cfg.get_or(args.classes, "classes", 2)?;
    let prefix: PathBuf = require(cfg.get(args.out.clone(), "out")?, "out")?;
    let train_path = with_suffix(&prefix, ".train.svm");
    let test_path = with_suffix(&prefix, ".test.svm");
    // distinct streams for the two files
    let (s_train, s_test) = (
        sub_seed(seed, 0),
        sub_seed(seed, 1),
    );
    match kind {
        SynthKind::Blobs if classes > 2 => {
            let train = blobs_multiclass(n, dim, classes, s_train)?;
            let test = blobs_multiclass(n_test, dim, classes, s_test)?;
            write_multi(&train_path, &train)?;
            write_multi(&test_path, &test)?;
        }
        SynthKind::Blobs => {
            write_binary(&train_path, &blobs(n, dim, s_train)?)?;
            write_binary(&test_path, &blobs(n_test, dim, s_test)?)?;
        }
        SynthKind::RedundantSparse => {
            write_binary(&train_path, &redundant_sparse(n, dim, s_train)?)?;
            write_binary(&test_path, &redundant_sparse(n_test, dim, s_test)?)?;
        }
    }
    Ok(())
}
