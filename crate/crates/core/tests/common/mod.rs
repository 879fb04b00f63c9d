//! Test-only reference implementations and generators.
//!
//! Nothing here calls into the scoring or pruning code under test: the
//! criterion reference recomputes every norm and cosine from scratch inside a
//! double loop, and the convolution evaluator is a direct nested-loop
//! convolution.
#![allow(dead_code)]

use filterprune::criteria::{CriterionKind, Family, FilterMatrix, NormKind, SimilarityKind};
use filterprune::tensor_io::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every criterion variant the toolkit offers.
pub fn all_criteria() -> Vec<CriterionKind> {
    use Family::*;
    use NormKind::*;
    use SimilarityKind::*;
    vec![
        CriterionKind::new(Norm, L1, Cosine),
        CriterionKind::new(Norm, L2, Cosine),
        CriterionKind::new(CosineSum, L2, Cosine),
        CriterionKind::new(CosineSum, L2, Correlation),
        CriterionKind::new(Fpgm, L2, Cosine),
        CriterionKind::new(Dm, L2, Cosine),
        CriterionKind::new(Dm, L2, Correlation),
        CriterionKind::new(Hc, L2, Cosine),
        CriterionKind::new(Hc, L1, Correlation),
        CriterionKind::new(Whc, L2, Cosine),
        CriterionKind::new(Whc, L1, Cosine),
        CriterionKind::new(Whc, L2, Correlation),
        CriterionKind::new(Whc, L1, Correlation),
    ]
}

fn ref_norm(row: &[f64], kind: NormKind) -> f64 {
    let mut acc = 0.0;
    for &v in row {
        match kind {
            NormKind::L1 => acc += v.abs(),
            NormKind::L2 => acc += v * v,
        }
    }
    match kind {
        NormKind::L1 => acc,
        NormKind::L2 => acc.sqrt(),
    }
}

fn ref_similarity(a: &[f64], b: &[f64], kind: SimilarityKind) -> f64 {
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    if kind == SimilarityKind::Correlation {
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        a.iter_mut().for_each(|v| *v -= ma);
        b.iter_mut().for_each(|v| *v -= mb);
    }
    let na = ref_norm(&a, NormKind::L2);
    let nb = ref_norm(&b, NormKind::L2);
    if na < 1e-12 || nb < 1e-12 {
        return 0.0;
    }
    let mut d = 0.0;
    for (x, y) in a.iter().zip(&b) {
        d += x * y;
    }
    (d / (na * nb)).clamp(-1.0, 1.0)
}

/// Naive reference for every criterion: one double loop over filter pairs.
pub fn reference_scores(rows: &[Vec<f64>], kind: CriterionKind) -> Vec<f64> {
    let n = rows.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let ni = ref_norm(&rows[i], kind.norm());
        let mut acc = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let s = ref_similarity(&rows[i], &rows[j], kind.similarity());
            acc += match kind.family() {
                Family::Norm => 0.0,
                Family::CosineSum => -s,
                Family::Fpgm => {
                    let mut d2 = 0.0;
                    for (a, b) in rows[i].iter().zip(&rows[j]) {
                        d2 += (a - b).powi(2);
                    }
                    d2.sqrt()
                }
                Family::Dm | Family::Hc => 1.0 - s.abs(),
                Family::Whc => ref_norm(&rows[j], kind.norm()) * (1.0 - s.abs()),
            };
        }
        out[i] = match kind.family() {
            Family::Norm => ni,
            Family::CosineSum | Family::Fpgm | Family::Dm => acc,
            Family::Hc | Family::Whc => ni * acc,
        };
    }
    out
}

/// `|got - want| / max(|want|, 1)`. Scores that cancel to nearly zero (a
/// parallel pair has `1 - |S| ≈ 1e-16`) are compared on unit scale.
pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1.0)
}

pub fn max_rel_err(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    got.iter()
        .zip(want)
        .map(|(g, w)| rel_err(*g, *w))
        .fold(0.0, f64::max)
}

pub fn random_rows(rng: &mut impl Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

/// Random rows with occasional degenerate structure: zero filters, constant
/// filters and (anti)parallel copies.
pub fn random_rows_with_edge_cases(rng: &mut impl Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    let mut m = random_rows(rng, rows, cols);
    for i in 0..rows {
        match rng.gen_range(0..12) {
            0 => m[i] = vec![0.0; cols],
            1 => m[i] = vec![rng.gen_range(-1.0..1.0); cols],
            2 if i > 0 => {
                let src = rng.gen_range(0..i);
                let alpha = rng.gen_range(-3.0..3.0);
                m[i] = m[src].iter().map(|v| v * alpha).collect();
            }
            _ => {}
        }
    }
    m
}

pub fn to_matrix(rows: &[Vec<f64>]) -> FilterMatrix {
    FilterMatrix::from_rows(rows).unwrap()
}

pub fn random_tensor(rng: &mut impl Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap()
}

/// Random orthogonal `n × n` matrix (row-major) from Gram-Schmidt on a random matrix.
pub fn random_orthogonal(rng: &mut impl Rng, n: usize) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
    while q.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..2 {
            for u in &q {
                let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            q.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    q
}

/// Row vectors times `q`.
pub fn rotate(rows: &[Vec<f64>], q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = q.len();
    rows.iter()
        .map(|r| (0..n).map(|c| (0..n).map(|k| r[k] * q[k][c]).sum()).collect())
        .collect()
}

/// Argsort by `(score, index)` ascending, independent of the crate's helper.
pub fn argsort(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    idx
}

/// True when `b` orders every pair of entries the way `a` does, ignoring pairs
/// of `a` closer than `tol` on unit scale.
pub fn same_order_up_to_ties(a: &[f64], b: &[f64], tol: f64) -> bool {
    for i in 0..a.len() {
        for j in 0..a.len() {
            let scale = a[i].abs().max(a[j].abs()).max(1.0);
            if a[i] - a[j] > tol * scale && b[i] <= b[j] {
                return false;
            }
        }
    }
    true
}

/// Stride-1 "same" convolution of `[c, h, w]` input with a `[o, c, k, k]`
/// weight (odd `k`), followed by ReLU when `relu` is set.
pub fn conv_forward(input: &[f64], c: usize, h: usize, w: usize, weight: &Tensor, relu: bool) -> Vec<f64> {
    let s = weight.shape();
    let (o, wc, k) = (s[0], s[1], s[2]);
    assert_eq!(wc, c, "weight expects {wc} input channels, got {c}");
    let pad = (k / 2) as isize;
    let wd = weight.data();
    let mut out = vec![0.0; o * h * w];
    for oc in 0..o {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for ic in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = y as isize + ky as isize - pad;
                            let ix = x as isize + kx as isize - pad;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let wv = f64::from(wd[((oc * c + ic) * k + ky) * k + kx]);
                            acc += wv * input[(ic * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out[(oc * h + y) * w + x] = if relu { acc.max(0.0) } else { acc };
            }
        }
    }
    out
}
