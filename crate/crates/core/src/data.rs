//! Sparse examples, labelled datasets and svmlight ingestion.
//!
//! Feature indices are 0-based internally and 1-based in svmlight files.
//! Binary labels are stored as `-1.0` / `+1.0`; files may also use `0` / `1`,
//! which are mapped to `-1` / `+1` on read.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;

use crate::error::{Error, Result};

/// A sparse feature vector with strictly increasing indices and finite values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self> {
        for pair in entries.windows(2) {
            if pair[0].0 >= pair[1].0 {
                return Err(Error::InvalidData(format!(
                    "sparse indices must be strictly increasing ({} then {})",
                    pair[0].0, pair[1].0
                )));
            }
        }
        if let Some(&(i, v)) = entries.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite value {v} at index {i}")));
        }
        Ok(SparseVector { entries })
    }

    /// Builds a vector from a dense slice, keeping only the nonzero coordinates.
    pub fn from_dense(values: &[f64]) -> Result<Self> {
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .collect();
        Self::new(entries)
    }

    /// Caller guarantees the invariants (sorted, unique, finite).
    pub(crate) fn from_sorted_unchecked(entries: Vec<(usize, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|p| p[0].0 < p[1].0));
        debug_assert!(entries.iter().all(|(_, v)| v.is_finite()));
        SparseVector { entries }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One past the largest stored index (0 for an empty vector).
    pub fn end(&self) -> usize {
        self.entries.last().map_or(0, |(i, _)| i + 1)
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.entries.binary_search_by_key(&index, |(i, _)| *i) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    /// Inner product with a dense vector. Indices past `dense.len()` must not occur.
    #[inline]
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    /// Keeps the entries for which `keep` returns true.
    pub fn retain(&self, mut keep: impl FnMut(usize, f64) -> bool) -> SparseVector {
        SparseVector {
            entries: self.entries.iter().copied().filter(|&(i, v)| keep(i, v)).collect(),
        }
    }

    /// Coordinatewise multiplication by `factors[i]`.
    pub fn scaled(&self, factors: &[f64]) -> SparseVector {
        SparseVector {
            entries: self.entries.iter().map(|&(i, v)| (i, v * factors[i])).collect(),
        }
    }
}

fn check_labels_binary(labels: &[f64]) -> Result<()> {
    match labels.iter().position(|&y| y != 1.0 && y != -1.0) {
        Some(n) => Err(Error::InvalidData(format!(
            "label {} of example {n} is not -1 or +1",
            labels[n]
        ))),
        None => Ok(()),
    }
}

fn check_indices(dim: usize, examples: &[SparseVector]) -> Result<()> {
    for (n, x) in examples.iter().enumerate() {
        if x.end() > dim {
            return Err(Error::InvalidData(format!(
                "example {n} has feature index {} but the dimension is {dim}",
                x.end() - 1
            )));
        }
    }
    Ok(())
}

/// A binary training corpus with labels in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    examples: Vec<SparseVector>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, examples: Vec<SparseVector>, labels: Vec<f64>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::InvalidData("dataset has no examples".into()));
        }
        if examples.len() != labels.len() {
            return Err(Error::InvalidData(format!(
                "{} examples but {} labels",
                examples.len(),
                labels.len()
            )));
        }
        check_labels_binary(&labels)?;
        check_indices(dim, &examples)?;
        Ok(Dataset {
            dim,
            examples,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[SparseVector] {
        &self.examples
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SparseVector, f64)> + '_ {
        self.examples.iter().zip(self.labels.iter().copied())
    }

    pub fn count_positive(&self) -> usize {
        self.labels.iter().filter(|&&y| y > 0.0).count()
    }

    /// Examples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.dim,
            indices.iter().map(|&i| self.examples[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// Same examples with every label negated.
    pub fn flipped(&self) -> Dataset {
        Dataset {
            dim: self.dim,
            examples: self.examples.clone(),
            labels: self.labels.iter().map(|y| -y).collect(),
        }
    }

    /// Same labels, examples replaced through `f`. The dimension is unchanged.
    pub fn map_examples(&self, mut f: impl FnMut(&SparseVector) -> SparseVector) -> Dataset {
        Dataset {
            dim: self.dim,
            examples: self.examples.iter().map(&mut f).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Re-declares the feature dimension; stored indices must stay below it.
    pub fn with_dim(mut self, dim: usize) -> Result<Dataset> {
        if dim < self.dim {
            check_indices(dim, &self.examples)?;
        }
        self.dim = dim;
        Ok(self)
    }

    /// Per-feature maximum absolute value, with 1.0 for features that never occur.
    pub fn max_abs(&self) -> Vec<f64> {
        max_abs(self.dim, &self.examples)
    }
}

fn max_abs(dim: usize, examples: &[SparseVector]) -> Vec<f64> {
    let mut m = vec![0.0f64; dim];
    for x in examples {
        for (i, v) in x.iter() {
            m[i] = m[i].max(v.abs());
        }
    }
    m.iter().map(|&v| if v > 0.0 { v } else { 1.0 }).collect()
}

/// A multiclass corpus with labels `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassDataset {
    dim: usize,
    n_classes: usize,
    examples: Vec<SparseVector>,
    labels: Vec<usize>,
}

impl MulticlassDataset {
    pub fn new(
        dim: usize,
        n_classes: usize,
        examples: Vec<SparseVector>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::InvalidData("dataset has no examples".into()));
        }
        if examples.len() != labels.len() {
            return Err(Error::InvalidData(format!(
                "{} examples but {} labels",
                examples.len(),
                labels.len()
            )));
        }
        if let Some(&k) = labels.iter().find(|&&k| k >= n_classes) {
            return Err(Error::InvalidData(format!(
                "class label {k} outside 0..{n_classes}"
            )));
        }
        check_indices(dim, &examples)?;
        Ok(MulticlassDataset {
            dim,
            n_classes,
            examples,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[SparseVector] {
        &self.examples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &k in &self.labels {
            counts[k] += 1;
        }
        counts
    }

    /// Binary view: class `k` becomes +1, every other class -1.
    pub fn one_vs_rest(&self, k: usize) -> Result<Dataset> {
        Dataset::new(
            self.dim,
            self.examples.clone(),
            self.labels
                .iter()
                .map(|&l| if l == k { 1.0 } else { -1.0 })
                .collect(),
        )
    }

    pub fn map_examples(
        &self,
        mut f: impl FnMut(&SparseVector) -> SparseVector,
    ) -> MulticlassDataset {
        MulticlassDataset {
            dim: self.dim,
            n_classes: self.n_classes,
            examples: self.examples.iter().map(&mut f).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn with_dim(mut self, dim: usize) -> Result<MulticlassDataset> {
        if dim < self.dim {
            check_indices(dim, &self.examples)?;
        }
        self.dim = dim;
        Ok(self)
    }

    pub fn max_abs(&self) -> Vec<f64> {
        max_abs(self.dim, &self.examples)
    }
}

/// A dataset whose examples carry an extra constant feature `1.0` at index `dim`
/// of the base data, so that a linear model's offset becomes an ordinary weight.
///
/// The constructor only accepts a plain [`Dataset`], so a view cannot be
/// augmented twice:
///
/// ```compile_fail
/// use dropsvm_core::data::{augment_with_offset, Dataset, SparseVector};
/// let d = Dataset::new(1, vec![SparseVector::default()], vec![1.0]).unwrap();
/// let once = augment_with_offset(d).unwrap();
/// let twice = augment_with_offset(once);
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedView {
    base: Dataset,
    examples: Vec<SparseVector>,
}

impl AugmentedView {
    pub fn base(&self) -> &Dataset {
        &self.base
    }

    /// Augmented dimension `D + 1`.
    pub fn dim(&self) -> usize {
        self.base.dim + 1
    }

    pub fn offset_index(&self) -> usize {
        self.base.dim
    }

    pub fn examples(&self) -> &[SparseVector] {
        &self.examples
    }

    pub fn labels(&self) -> &[f64] {
        self.base.labels()
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn into_base(self) -> Dataset {
        self.base
    }
}

pub fn augment_with_offset(data: Dataset) -> Result<AugmentedView> {
    if data.dim == 0 {
        return Err(Error::InvalidData("empty feature space".into()));
    }
    let offset = data.dim;
    let examples = data
        .examples
        .iter()
        .map(|x| {
            let mut entries = Vec::with_capacity(x.nnz() + 1);
            entries.extend_from_slice(x.entries());
            entries.push((offset, 1.0));
            SparseVector::from_sorted_unchecked(entries)
        })
        .collect();
    Ok(AugmentedView {
        base: data,
        examples,
    })
}

struct RawRecord {
    label: f64,
    features: SparseVector,
}

fn parse_records<R: BufRead>(reader: R) -> Result<(Vec<RawRecord>, usize)> {
    let mut records = Vec::new();
    let mut max_end = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let content = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line[..],
        };
        let mut tokens = content.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        let label: f64 = label_tok
            .parse()
            .map_err(|_| Error::parse(lineno, format!("invalid label '{label_tok}'")))?;
        if !label.is_finite() {
            return Err(Error::parse(lineno, format!("invalid label '{label_tok}'")));
        }
        let mut entries = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| Error::parse(lineno, format!("expected idx:value, got '{tok}'")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::parse(lineno, format!("invalid feature index '{idx}'")))?;
            if idx == 0 {
                return Err(Error::parse(lineno, "feature indices are 1-based"));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| Error::parse(lineno, format!("invalid feature value '{val}'")))?;
            if !val.is_finite() {
                return Err(Error::parse(lineno, format!("non-finite feature value '{val}'")));
            }
            entries.push((idx - 1, val));
        }
        entries.sort_by_key(|(i, _)| *i);
        if let Some(pair) = entries.windows(2).find(|p| p[0].0 == p[1].0) {
            return Err(Error::parse(
                lineno,
                format!("duplicate feature index {}", pair[0].0 + 1),
            ));
        }
        let features = SparseVector::from_sorted_unchecked(entries);
        max_end = max_end.max(features.end());
        records.push(RawRecord { label, features });
    }
    if records.is_empty() {
        return Err(Error::InvalidData("no examples in input".into()));
    }
    Ok((records, max_end))
}

/// Reads a binary svmlight corpus. Labels must be one of -1, +1, 0, 1
/// (0 maps to -1). The dimension is the largest index seen, or `dim_hint`
/// when that is larger.
pub fn parse_svmlight<R: BufRead>(reader: R, dim_hint: Option<usize>) -> Result<Dataset> {
    let (records, max_end) = parse_records(reader)?;
    let dim = max_end.max(dim_hint.unwrap_or(0));
    let mut examples = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for (n, r) in records.into_iter().enumerate() {
        let y = if r.label == 1.0 {
            1.0
        } else if r.label == -1.0 || r.label == 0.0 {
            -1.0
        } else {
            return Err(Error::InvalidData(format!(
                "example {} has label {}; binary labels must be -1, +1, 0 or 1",
                n + 1,
                r.label
            )));
        };
        examples.push(r.features);
        labels.push(y);
    }
    Dataset::new(dim, examples, labels)
}

/// Reads a multiclass svmlight corpus with non-negative integer labels.
/// The class count is one more than the largest label.
pub fn parse_svmlight_multiclass<R: BufRead>(
    reader: R,
    dim_hint: Option<usize>,
) -> Result<MulticlassDataset> {
    let (records, max_end) = parse_records(reader)?;
    let dim = max_end.max(dim_hint.unwrap_or(0));
    let mut examples = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for (n, r) in records.into_iter().enumerate() {
        if r.label < 0.0 || r.label.fract() != 0.0 {
            return Err(Error::InvalidData(format!(
                "example {} has label {}; multiclass labels must be non-negative integers",
                n + 1,
                r.label
            )));
        }
        examples.push(r.features);
        labels.push(r.label as usize);
    }
    let n_classes = labels.iter().max().map_or(0, |k| k + 1);
    MulticlassDataset::new(dim, n_classes, examples, labels)
}

fn write_features<W: Write>(out: &mut W, x: &SparseVector) -> std::io::Result<()> {
    for (i, v) in x.iter() {
        write!(out, " {}:{}", i + 1, v)?;
    }
    writeln!(out)
}

pub fn write_svmlight<W: Write>(data: &Dataset, mut out: W) -> Result<()> {
    for (x, y) in data.iter() {
        write!(out, "{}", if y > 0.0 { "+1" } else { "-1" })?;
        write_features(&mut out, x)?;
    }
    Ok(())
}

pub fn write_svmlight_multiclass<W: Write>(data: &MulticlassDataset, mut out: W) -> Result<()> {
    for (x, k) in data.examples().iter().zip(data.labels()) {
        write!(out, "{k}")?;
        write_features(&mut out, x)?;
    }
    Ok(())
}

/// Opens a file for reading, transparently decompressing gzip input.
pub fn open_input(path: impl AsRef<Path>) -> Result<Box<dyn BufRead>> {
    let mut file = File::open(path)?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    file.seek(SeekFrom::Start(0))?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

pub fn read_svmlight_file(path: impl AsRef<Path>, dim_hint: Option<usize>) -> Result<Dataset> {
    parse_svmlight(open_input(path)?, dim_hint)
}

pub fn read_svmlight_multiclass_file(
    path: impl AsRef<Path>,
    dim_hint: Option<usize>,
) -> Result<MulticlassDataset> {
    parse_svmlight_multiclass(open_input(path)?, dim_hint)
}
