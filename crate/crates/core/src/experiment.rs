//! Experiment protocols producing result tables: error against noise level,
//! explicit corruption against the number of copies, and error against
//! test-time deletion.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{
    cross_validate, evaluate, nightmare_curve, sub_seed, DeletionSchedule, GridSpec, NightmareEntry,
};
use crate::trainers::{train_dropout_svm, train_explicit_corruption, HingeConfig, Trainer};
use crate::noise::NoiseSpec;

pub const BASE_COLUMNS: [&str; 9] = ["trainer", "noise", "q", "c", "ell", "deletion", "error", "n_test", "seed"];

/// Number of copies in explicit-vs-implicit tables; `None` marks the
/// marginalized reference row (written as `inf`).
pub type Copies = Option<usize>;

/// One line of a result table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub trainer: String,
    pub noise: String,
    /// Noise level, absent for parameter-free noise.
    pub q: Option<f64>,
    pub c: f64,
    pub ell: Option<f64>,
    pub deletion: f64,
    pub error: f64,
    pub n_test: usize,
    pub seed: u64,
    /// Only present in explicit-vs-implicit tables.
    pub copies: Option<Copies>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    record
        .get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse(record.position().map_or(0, |p| p.line() as usize), format!("bad `{name}` field")))
}

fn parse_opt(record: &csv::StringRecord, i: usize, name: &str) -> Result<Option<f64>> {
    match record.get(i) {
        Some("") => Ok(None),
        _ => parse_field(record, i, name).map(Some),
    }
}

impl ResultRow {
    pub fn new(trainer: &Trainer, deletion: f64, error: f64, n_test: usize, seed: u64) -> Self {
        let noise = trainer.noise();
        ResultRow {
            trainer: trainer.name().to_string(),
            noise: noise.kind_name().to_string(),
            q: noise.level(),
            c: trainer.c(),
            ell: trainer.ell(),
            deletion,
            error,
            n_test,
            seed,
            copies: None,
        }
    }

    fn fields(&self) -> Vec<String> {
        let mut f = vec![
            self.trainer.clone(),
            self.noise.clone(),
            fmt_opt(self.q),
            self.c.to_string(),
            fmt_opt(self.ell),
            self.deletion.to_string(),
            self.error.to_string(),
            self.n_test.to_string(),
            self.seed.to_string(),
        ];
        if let Some(m) = self.copies {
            f.push(m.map_or_else(|| "inf".to_string(), |m| m.to_string()));
        }
        f
    }

    fn from_record(record: &csv::StringRecord, with_copies: bool) -> Result<Self> {
        let copies = if with_copies {
            Some(match record.get(9) {
                Some("inf") => None,
                _ => Some(parse_field(record, 9, "M")?),
            })
        } else {
            None
        };
        Ok(ResultRow {
            trainer: record.get(0).unwrap_or_default().to_string(),
            noise: record.get(1).unwrap_or_default().to_string(),
            q: parse_opt(record, 2, "q")?,
            c: parse_field(record, 3, "c")?,
            ell: parse_opt(record, 4, "ell")?,
            deletion: parse_field(record, 5, "deletion")?,
            error: parse_field(record, 6, "error")?,
            n_test: parse_field(record, 7, "n_test")?,
            seed: parse_field(record, 8, "seed")?,
            copies,
        })
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidData(format!("csv: {other:?}")),
    }
}

/// Column names of a table; the `M` column is added when any row carries copies.
pub fn header(rows: &[ResultRow]) -> Vec<&'static str> {
    let mut h = BASE_COLUMNS.to_vec();
    if rows.iter().any(|r| r.copies.is_some()) {
        h.push("M");
    }
    h
}

/// Writes `rows` as CSV, with the header line only if `with_header`.
pub fn write_csv<W: Write>(rows: &[ResultRow], with_header: bool, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    if with_header {
        w.write_record(header(rows)).map_err(csv_error)?;
    }
    for row in rows {
        w.write_record(row.fields()).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table written by [`write_csv`] (header required).
pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader.headers().map_err(csv_error)?.clone();
    let base: Vec<&str> = headers.iter().take(BASE_COLUMNS.len()).collect();
    if base != BASE_COLUMNS {
        return Err(Error::parse(1, "unexpected result-table header"));
    }
    let with_copies = headers.get(9) == Some("M");
    reader
        .records()
        .map(|r| ResultRow::from_record(&r.map_err(csv_error)?, with_copies))
        .collect()
}

/// Gnuplot data: one block per trainer (separated by two blank lines) with
/// the columns `x error`, where `x` is chosen by `key`.
pub fn write_gnuplot<W: Write>(rows: &[ResultRow], key: impl Fn(&ResultRow) -> f64, mut out: W) -> Result<()> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.trainer.as_str()) {
            names.push(&r.trainer);
        }
    }
    for (i, name) in names.iter().enumerate() {
        if i > 0 {
            writeln!(out, "\n")?;
        }
        writeln!(out, "# {name}")?;
        for r in rows.iter().filter(|r| r.trainer == *name) {
            writeln!(out, "{} {}", key(r), r.error)?;
        }
    }
    Ok(())
}

/// Error against noise level: for each trainer and level, `c` is chosen by
/// cross-validation over `grid.c_grid` (skipped for a single value), then the
/// model is fitted on `train` and scored on `test`.
pub fn binary_sweep(trainers: &[Trainer], train: &Dataset, test: &Dataset, grid: &GridSpec) -> Result<Vec<ResultRow>> {
    grid.validate()?;
    let mut rows = Vec::new();
    for trainer in trainers {
        for &q in &grid.levels {
            let c = if grid.c_grid.len() == 1 {
                grid.c_grid[0]
            } else {
                let single = GridSpec {
                    levels: vec![q],
                    ..grid.clone()
                };
                cross_validate(trainer, train, &single)?.best_c
            };
            let fitted = trainer.with_params(c, q)?;
            let result = evaluate(&fitted.fit(train)?.model, test)?;
            rows.push(ResultRow::new(&fitted, 0.0, result.error_rate, result.n_test, grid.seed));
        }
    }
    Ok(rows)
}

/// Explicit corruption with each number of copies in `copies`, plus the
/// marginalized Dropout-SVM reference row.
pub fn explicit_vs_implicit(
    noise: &NoiseSpec,
    cfg: &HingeConfig,
    copies: &[usize],
    train: &Dataset,
    test: &Dataset,
    seed: u64,
) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::with_capacity(copies.len() + 1);
    for (k, &m) in copies.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, k as u64));
        let model = train_explicit_corruption(train, noise, m, cfg, &mut rng)?.model;
        let result = evaluate(&model, test)?;
        let trainer = Trainer::Explicit {
            noise: *noise,
            copies: m,
            config: *cfg,
            seed,
        };
        let mut row = ResultRow::new(&trainer, 0.0, result.error_rate, result.n_test, seed);
        row.copies = Some(Some(m));
        rows.push(row);
    }
    let model = train_dropout_svm(train, noise, cfg)?.model;
    let result = evaluate(&model, test)?;
    let trainer = Trainer::DropoutSvm {
        noise: *noise,
        config: *cfg,
    };
    let mut row = ResultRow::new(&trainer, 0.0, result.error_rate, result.n_test, seed);
    row.copies = Some(None);
    rows.push(row);
    Ok(rows)
}

/// Error against deletion fraction, one row per fraction and entry.
pub fn nightmare(
    entries: &[NightmareEntry],
    train: &Dataset,
    test: &Dataset,
    sched: &DeletionSchedule,
    grid: &GridSpec,
) -> Result<Vec<ResultRow>> {
    let points = nightmare_curve(entries, train, test, sched, grid)?;
    Ok(points
        .iter()
        .map(|p| {
            let mut row = ResultRow::new(&p.trainer, p.fraction, p.test.error_rate, p.test.n_test, sched.seed());
            row.trainer = p.name.clone();
            row
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(copies: Option<Copies>) -> ResultRow {
        ResultRow {
            trainer: "dropout-svm".into(),
            noise: "dropout".into(),
            q: Some(0.25),
            c: 0.1,
            ell: Some(1.0),
            deletion: 0.5,
            error: 0.1234,
            n_test: 500,
            seed: 42,
            copies,
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row(None), ResultRow { q: None, ell: None, ..row(None) }];
        let mut buf = Vec::new();
        write_csv(&rows, true, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("trainer,noise,q,c,ell,deletion,error,n_test,seed\n"));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn csv_round_trip_with_copies() {
        let rows = vec![row(Some(Some(16))), row(Some(None))];
        let mut buf = Vec::new();
        write_csv(&rows, true, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().ends_with(",seed,M"));
        assert!(text.lines().last().unwrap().ends_with(",inf"));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn gnuplot_blocks_per_trainer() {
        let mut other = row(None);
        other.trainer = "mcf-quadratic".into();
        let mut buf = Vec::new();
        write_gnuplot(&[row(None), other], |r| r.deletion, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "# dropout-svm\n0.5 0.1234\n\n\n# mcf-quadratic\n0.5 0.1234\n");
    }
}
