//! Reproducible synthetic corpora.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, MulticlassDataset, SparseVector};
use crate::error::{Error, Result};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn check_sizes(n: usize, dim: usize) -> Result<()> {
    if n < 2 || dim == 0 {
        return Err(Error::Config(format!(
            "synthetic data needs n >= 2 and dim >= 1, got n={n}, dim={dim}"
        )));
    }
    Ok(())
}

fn balanced_labels<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut labels: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    labels.shuffle(rng);
    labels
}

/// Two unit-variance Gaussian blobs with means `+-mu` along the diagonal,
/// `||2 mu|| = 3`: linearly separable up to an overlap of about 7%.
pub fn blobs(n: usize, dim: usize, seed: u64) -> Result<Dataset> {
    check_sizes(n, dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = 1.5 / (dim as f64).sqrt();
    let labels = balanced_labels(n, &mut rng);
    let examples = labels
        .iter()
        .map(|&y| {
            let dense: Vec<f64> = (0..dim).map(|_| y * shift + gaussian(&mut rng)).collect();
            SparseVector::from_dense(&dense)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(dim, examples, labels)
}

/// `k` unit-variance blobs centred at `6 e_j` (`j < k`); needs `dim >= k`.
pub fn blobs_multiclass(n: usize, dim: usize, k: usize, seed: u64) -> Result<MulticlassDataset> {
    check_sizes(n, dim)?;
    if k < 2 || k > dim {
        return Err(Error::Config(format!("need 2 <= classes <= dim, got {k} classes, dim {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % k;
        let mut dense: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
        dense[class] += 6.0;
        examples.push(SparseVector::from_dense(&dense)?);
        labels.push(class);
    }
    MulticlassDataset::new(dim, k, examples, labels)
}

/// Sparse data whose label signal is planted redundantly.
///
/// Each example carries `signals` latent values `s_g = y mu + N(0, 1)`.
/// Signal `g` owns `copies` coordinates and every copy is stored
/// independently with probability `presence`, so the same evidence is spread
/// over many sparse features. A few dense `strong` features of magnitude
/// `strong_value` agree with the label with probability `strong_accuracy`;
/// clean training leans on them because they are cheap under an `l2`
/// penalty. For a `long_share` of the negative examples the strong features
/// are further multiplied by `long_scale`, which puts those examples far on
/// the correct side of the boundary. The remaining coordinates are sparse
/// Gaussian noise stored with probability `noise_presence`.
#[derive(Debug, Clone, PartialEq)]
pub struct RedundantSparse {
    pub signals: usize,
    pub copies: usize,
    pub presence: f64,
    pub mu: f64,
    pub strong: usize,
    pub strong_accuracy: f64,
    pub strong_value: f64,
    pub long_share: f64,
    pub long_scale: f64,
    pub noise_presence: f64,
}

impl Default for RedundantSparse {
    fn default() -> Self {
        RedundantSparse {
            signals: 5,
            copies: 20,
            presence: 0.3,
            mu: 0.5,
            strong: 3,
            strong_accuracy: 0.95,
            strong_value: 6.0,
            long_share: 0.3,
            long_scale: 5.0,
            noise_presence: 0.05,
        }
    }
}

impl RedundantSparse {
    /// Coordinates used by the strong and redundant blocks.
    pub fn min_dim(&self) -> usize {
        self.strong + self.signals * self.copies
    }

    pub fn generate(&self, n: usize, dim: usize, seed: u64) -> Result<Dataset> {
        check_sizes(n, dim)?;
        if dim < self.min_dim() {
            return Err(Error::Config(format!(
                "redundant-sparse needs dim >= {}, got {dim}",
                self.min_dim()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let block = self.min_dim();
        let labels = balanced_labels(n, &mut rng);
        let mut examples = Vec::with_capacity(n);
        for &y in &labels {
            let long = y < 0.0 && rng.random::<f64>() < self.long_share;
            let magnitude = if long { self.long_scale * self.strong_value } else { self.strong_value };
            let mut entries = Vec::new();
            for d in 0..self.strong {
                let agrees = rng.random::<f64>() < self.strong_accuracy;
                entries.push((d, if agrees { y * magnitude } else { -y * magnitude }));
            }
            for g in 0..self.signals {
                let s = y * self.mu + gaussian(&mut rng);
                for j in 0..self.copies {
                    if rng.random::<f64>() < self.presence {
                        entries.push((self.strong + g * self.copies + j, s));
                    }
                }
            }
            for d in block..dim {
                if rng.random::<f64>() < self.noise_presence {
                    entries.push((d, gaussian(&mut rng)));
                }
            }
            entries.retain(|&(_, v)| v != 0.0);
            examples.push(SparseVector::new(entries)?);
        }
        Dataset::new(dim, examples, labels)
    }
}

/// [`RedundantSparse`] with its default settings.
pub fn redundant_sparse(n: usize, dim: usize, seed: u64) -> Result<Dataset> {
    RedundantSparse::default().generate(n, dim, seed)
}
