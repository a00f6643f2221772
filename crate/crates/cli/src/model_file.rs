//! Plain-text model files.
//!
//! ```text
//! dim 3
//! trainer dropout-svm
//! noise dropout
//! q 0.5
//! c 1
//! ell 1
//! offset true
//! 0 0.25
//! 1 -1.5
//! 2 0
//! 3 0.125
//! ```
//!
//! Coefficient lines are `index value` for `0..=dim`; index `dim` is the
//! offset. Multiclass files add `classes K` to the header and precede each
//! block of coefficients with `class k`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dropsvm_core::trainers::OvaModel;
use dropsvm_core::{Error, ModelParams, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelHeader {
    pub trainer: String,
    pub noise: String,
    pub q: Option<f64>,
    pub c: f64,
    pub ell: Option<f64>,
    pub offset: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Binary(ModelParams),
    Multiclass(OvaModel),
}

impl Classifier {
    pub fn dim(&self) -> usize {
        match self {
            Classifier::Binary(m) => m.dim(),
            Classifier::Multiclass(m) => m.dim(),
        }
    }
}

fn write_coef(out: &mut String, model: &ModelParams) {
    for (i, v) in model.coef().iter().enumerate() {
        let _ = writeln!(out, "{i} {v}");
    }
}

pub fn render(header: &ModelHeader, model: &Classifier) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "dim {}", model.dim());
    let _ = writeln!(out, "trainer {}", header.trainer);
    let _ = writeln!(out, "noise {}", header.noise);
    if let Some(q) = header.q {
        let _ = writeln!(out, "q {q}");
    }
    let _ = writeln!(out, "c {}", header.c);
    if let Some(ell) = header.ell {
        let _ = writeln!(out, "ell {ell}");
    }
    let _ = writeln!(out, "offset {}", header.offset);
    match model {
        Classifier::Binary(m) => write_coef(&mut out, m),
        Classifier::Multiclass(ova) => {
            let _ = writeln!(out, "classes {}", ova.classes().len());
            for (k, m) in ova.classes().iter().zip(ova.models()) {
                let _ = writeln!(out, "class {k}");
                write_coef(&mut out, m);
            }
        }
    }
    out
}

pub fn save(path: &Path, header: &ModelHeader, model: &Classifier) -> Result<()> {
    fs::write(path, render(header, model))?;
    Ok(())
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: msg.into(),
    }
}

fn value<T: std::str::FromStr>(line: usize, raw: &str, key: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| bad(line, format!("bad value `{raw}` for `{key}`")))
}

fn finish_block(
    line: usize,
    dim: usize,
    coef: &mut Vec<f64>,
    out: &mut Vec<ModelParams>,
) -> Result<()> {
    if coef.len() != dim + 1 {
        return Err(bad(line, format!("expected {} coefficients, found {}", dim + 1, coef.len())));
    }
    out.push(ModelParams::from_coef(std::mem::take(coef))?);
    Ok(())
}

pub fn parse(text: &str) -> Result<(ModelHeader, Classifier)> {
    let mut dim = None;
    let mut trainer = None;
    let mut noise = None;
    let mut q = None;
    let mut c = None;
    let mut ell = None;
    let mut offset = true;
    let mut classes: Option<usize> = None;
    let mut blocks = Vec::new();
    let mut coef = Vec::new();
    let mut in_class = false;
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        last_line = n;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        let rest = rest.trim();
        if let Ok(index) = key.parse::<usize>() {
            let d = dim.ok_or_else(|| bad(n, "coefficient before `dim`"))?;
            if classes.is_some() && !in_class {
                return Err(bad(n, "coefficient outside a `class` block"));
            }
            if index != coef.len() || index > d {
                return Err(bad(n, format!("unexpected coefficient index {index}")));
            }
            coef.push(value(n, rest, "coefficient")?);
            continue;
        }
        match key {
            "dim" => dim = Some(value(n, rest, key)?),
            "trainer" => trainer = Some(rest.to_string()),
            "noise" => noise = Some(rest.to_string()),
            "q" => q = Some(value(n, rest, key)?),
            "c" => c = Some(value(n, rest, key)?),
            "ell" => ell = Some(value(n, rest, key)?),
            "offset" => offset = value(n, rest, key)?,
            "classes" => classes = Some(value(n, rest, key)?),
            "class" => {
                let k: usize = value(n, rest, key)?;
                if classes.is_none() {
                    return Err(bad(n, "`class` block without `classes` header"));
                }
                if in_class {
                    finish_block(n, dim.unwrap_or(0), &mut coef, &mut blocks)?;
                }
                if k != blocks.len() {
                    return Err(bad(n, format!("expected class {}, found {k}", blocks.len())));
                }
                in_class = true;
            }
            other => return Err(bad(n, format!("unknown model field `{other}`"))),
        }
    }
    let dim = dim.ok_or_else(|| bad(last_line, "missing `dim`"))?;
    finish_block(last_line, dim, &mut coef, &mut blocks)?;
    let header = ModelHeader {
        trainer: trainer.ok_or_else(|| bad(last_line, "missing `trainer`"))?,
        noise: noise.ok_or_else(|| bad(last_line, "missing `noise`"))?,
        q,
        c: c.ok_or_else(|| bad(last_line, "missing `c`"))?,
        ell,
        offset,
    };
    let model = match classes {
        None => Classifier::Binary(blocks.pop().expect("one block")),
        Some(k) => {
            if blocks.len() != k {
                return Err(bad(last_line, format!("expected {k} class blocks, found {}", blocks.len())));
            }
            Classifier::Multiclass(OvaModel::new((0..k).collect(), blocks)?)
        }
    };
    Ok((header, model))
}

pub fn load(path: &Path) -> Result<(ModelHeader, Classifier)> {
    parse(&fs::read_to_string(path)?)
}
