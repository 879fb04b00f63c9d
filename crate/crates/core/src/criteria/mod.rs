//! Per-filter importance scores.
//!
//! Every criterion maps a [`FilterMatrix`] to one score per filter with a
//! uniform convention: higher means more important, and pruning removes the
//! lowest scores first.
//!
//! | family       | score of filter `i`                                   |
//! |--------------|-------------------------------------------------------|
//! | `norm`       | `‖F_i‖`                                               |
//! | `cosine_sum` | `-Σ_{j≠i} S_ij`                                       |
//! | `fpgm`       | `Σ_{j≠i} ‖F_i - F_j‖₂`                                |
//! | `dm`         | `Σ_{j≠i} (1 - |S_ij|)`                                |
//! | `hc`         | `‖F_i‖ · Σ_{j≠i} (1 - |S_ij|)`                        |
//! | `whc`        | `‖F_i‖ · Σ_{j≠i} ‖F_j‖ · (1 - |S_ij|)`                |
//!
//! `S` is the cosine (or correlation) matrix of the flattened filters; `‖·‖`
//! is the criterion's ℓ1 or ℓ2 norm. All arithmetic is `f64`, and every
//! sum runs over `j` in ascending order, so results are bitwise reproducible.

mod kind;
mod probe;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use kind::{CriterionKind, Family, NormKind, SimilarityKind};
pub use probe::{pair_terms, perturbation_probe, rank_inversions, PairTerms, ProbeReport, ProbeTrial};

use crate::error::{Error, Result};
use crate::tensor_io::Tensor;

/// Rows whose (centred) ℓ2 norm is below this are treated as zero filters:
/// their similarity to every other row is 0.
pub const EPS_ZERO: f64 = 1e-12;

/// One layer's filters as an `n_out × (n_in·k·k)` row-major matrix.
///
/// Row `i` is filter `i` flattened input-channel major, then kernel row,
/// then kernel column, which is exactly the row-major layout of
/// `weight[i, :, :, :]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FilterMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "filter matrix must be non-empty, got {rows}×{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}×{cols} filter matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!(
                "filter matrix entry ({}, {}) is not finite",
                i / cols,
                i % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if let Some(bad) = rows.iter().position(|r| r.as_ref().len() != cols) {
            return Err(Error::Shape(format!(
                "row {bad} has {} columns, expected {cols}",
                rows[bad].as_ref().len()
            )));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    /// Elementwise `self + scale * other`.
    pub fn add_scaled(&self, other: &FilterMatrix, scale: f64) -> Result<FilterMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "cannot add {}×{} matrix to {}×{} matrix",
                other.rows, other.cols, self.rows, self.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + scale * b)
            .collect();
        FilterMatrix::new(self.rows, self.cols, data)
    }

    /// Multiplies every entry by `c`.
    pub fn scaled(&self, c: f64) -> Result<FilterMatrix> {
        FilterMatrix::new(self.rows, self.cols, self.data.iter().map(|v| v * c).collect())
    }
}

/// Flattens a rank-4 `[n_out, n_in, k, k]` conv weight into a [`FilterMatrix`].
pub fn flatten(weight: &Tensor) -> Result<FilterMatrix> {
    let shape = weight.shape();
    if shape.len() != 4 {
        return Err(Error::Shape(format!(
            "expected a rank-4 conv weight, got shape {shape:?}"
        )));
    }
    let rows = shape[0];
    let cols = shape[1] * shape[2] * shape[3];
    FilterMatrix::new(rows, cols, weight.data().iter().map(|&v| f64::from(v)).collect())
}

pub fn vector_norm(v: &[f64], kind: NormKind) -> f64 {
    match kind {
        NormKind::L1 => v.iter().map(|x| x.abs()).sum(),
        NormKind::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
    }
}

pub fn filter_norms(fm: &FilterMatrix, kind: NormKind) -> Vec<f64> {
    fm.row_iter().map(|r| vector_norm(r, kind)).collect()
}

/// Symmetric `n × n` matrix of pairwise similarities, clamped to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pairwise cosine (or correlation) similarities of the rows of `fm`.
///
/// Correlation subtracts each row's own mean before taking the cosine.
/// Pairs involving a row with norm below [`EPS_ZERO`] get similarity 0; the
/// diagonal is always 1.
pub fn similarity(fm: &FilterMatrix, kind: SimilarityKind) -> SimilarityMatrix {
    let n = fm.rows();
    let centred: Vec<Vec<f64>> = match kind {
        SimilarityKind::Cosine => fm.row_iter().map(<[f64]>::to_vec).collect(),
        SimilarityKind::Correlation => fm
            .row_iter()
            .map(|r| {
                let mean = r.iter().sum::<f64>() / r.len() as f64;
                r.iter().map(|v| v - mean).collect()
            })
            .collect(),
    };
    // Squared norms; the cosine takes a single square root of their product.
    let sq: Vec<f64> = centred.iter().map(|r| dot(r, r)).collect();
    let degenerate: Vec<bool> = sq.iter().map(|s| s.sqrt() < EPS_ZERO).collect();

    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = 1.0;
        for j in i + 1..n {
            let s = if degenerate[i] || degenerate[j] {
                0.0
            } else {
                (dot(&centred[i], &centred[j]) / (sq[i] * sq[j]).sqrt()).clamp(-1.0, 1.0)
            };
            data[i * n + j] = s;
            data[j * n + i] = s;
        }
    }
    SimilarityMatrix { n, data }
}

/// Scores for one layer under one criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    #[serde(rename = "layer")]
    pub layer_name: String,
    pub criterion: CriterionKind,
    pub scores: Vec<f64>,
    /// Filter norms under the criterion's norm kind (ℓ2 for families without one).
    pub norms: Vec<f64>,
}

impl ScoreReport {
    /// Filter indices in pruning order: ascending score, ties by ascending index.
    pub fn pruning_order(&self) -> Vec<usize> {
        pruning_order(&self.scores)
    }
}

/// Indices sorted by `(score ascending, index ascending)`.
pub fn pruning_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    idx
}

/// Scores the filters of `fm` under `kind`. The report's layer name is empty;
/// see [`score_layer`] for the named variant.
pub fn score(fm: &FilterMatrix, kind: CriterionKind) -> Result<ScoreReport> {
    let n = fm.rows();
    let norms = filter_norms(fm, kind.norm());
    let scores = match kind.family() {
        Family::Norm => norms.clone(),
        Family::CosineSum => {
            let s = similarity(fm, kind.similarity());
            (0..n)
                .map(|i| 0.0 - (0..n).filter(|&j| j != i).map(|j| s.get(i, j)).sum::<f64>())
                .collect()
        }
        Family::Fpgm => {
            if n < 2 {
                return Err(Error::Criterion(
                    "fpgm needs at least two filters to compare".into(),
                ));
            }
            let mut dist = vec![0.0; n * n];
            for i in 0..n {
                for j in i + 1..n {
                    let d = fm
                        .row(i)
                        .iter()
                        .zip(fm.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    dist[i * n + j] = d;
                    dist[j * n + i] = d;
                }
            }
            (0..n)
                .map(|i| (0..n).filter(|&j| j != i).map(|j| dist[i * n + j]).sum())
                .collect()
        }
        Family::Dm => {
            let s = similarity(fm, kind.similarity());
            (0..n).map(|i| dm_sum(&s, i, |_| 1.0)).collect()
        }
        Family::Hc => {
            let s = similarity(fm, kind.similarity());
            (0..n).map(|i| norms[i] * dm_sum(&s, i, |_| 1.0)).collect()
        }
        Family::Whc => {
            let s = similarity(fm, kind.similarity());
            (0..n).map(|i| norms[i] * dm_sum(&s, i, |j| norms[j])).collect()
        }
    };
    Ok(ScoreReport {
        layer_name: String::new(),
        criterion: kind,
        scores,
        norms,
    })
}

/// `Σ_{j≠i} weight(j) · (1 - |S_ij|)`.
fn dm_sum(s: &SimilarityMatrix, i: usize, weight: impl Fn(usize) -> f64) -> f64 {
    s.row(i)
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, sij)| weight(j) * (1.0 - sij.abs()))
        .sum()
}

pub fn score_layer(name: &str, weight: &Tensor, kind: CriterionKind) -> Result<ScoreReport> {
    let fm = flatten(weight).map_err(|e| Error::Shape(format!("layer `{name}`: {e}")))?;
    let mut report =
        score(&fm, kind).map_err(|e| Error::Criterion(format!("layer `{name}`: {e}")))?;
    report.layer_name = name.to_string();
    Ok(report)
}

/// Scores several layers concurrently; the output follows the input order.
pub fn score_layers(layers: &[(&str, &Tensor)], kind: CriterionKind) -> Result<Vec<ScoreReport>> {
    layers
        .par_iter()
        .map(|(name, tensor)| score_layer(name, tensor, kind))
        .collect()
}
