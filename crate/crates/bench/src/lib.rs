//! Fixtures shared by the benchmarks.

use dropsvm_core::noise::moments;
use dropsvm_core::synth::redundant_sparse;
use dropsvm_core::{CorruptionMoments, Dataset, NoiseSpec};

/// Redundant-sparse training data of the given size.
pub fn corpus(n: usize, dim: usize) -> Dataset {
    redundant_sparse(n, dim, 7).expect("valid synthetic sizes")
}

/// Marginalized dropout rows of `data`.
pub fn dropout_rows(data: &Dataset, q: f64) -> Vec<CorruptionMoments> {
    let noise = NoiseSpec::Dropout { q };
    data.examples()
        .iter()
        .map(|x| moments(&noise, x).expect("valid dropout level"))
        .collect()
}
