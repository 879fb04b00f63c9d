//! Side-by-side evaluation of several criteria on the same layers.

use serde::{Deserialize, Serialize};

use crate::criteria::{score_layers, CriterionKind};
use crate::error::{Error, Result};
use crate::planner::{build_plan, RateSchedule};
use crate::tensor_io::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub a: CriterionKind,
    pub b: CriterionKind,
    /// Fraction of pruned indices the two plans share (1.0 when both prune nothing).
    pub agreement: f64,
    /// Spearman rank correlation of the two score vectors.
    pub spearman: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerComparison {
    pub layer: String,
    /// One score vector per criterion, in criterion order.
    pub scores: Vec<Vec<f64>>,
    pub pruned: Vec<Vec<usize>>,
    pub pairs: Vec<PairAgreement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub criteria: Vec<CriterionKind>,
    pub layers: Vec<LayerComparison>,
    /// Per criterion pair, agreement and correlation averaged over layers.
    pub summary: Vec<PairAgreement>,
}

pub fn compare_criteria(
    layers: &[(&str, &Tensor)],
    criteria: &[CriterionKind],
    schedule: &RateSchedule,
) -> Result<ComparisonReport> {
    if criteria.len() < 2 {
        return Err(Error::Criterion(
            "comparison needs at least two criteria".into(),
        ));
    }
    let mut per_criterion = Vec::with_capacity(criteria.len());
    for &kind in criteria {
        let reports = score_layers(layers, kind)?;
        let plan = build_plan(&reports, schedule)?;
        per_criterion.push((reports, plan));
    }

    let pairs: Vec<(usize, usize)> = (0..criteria.len())
        .flat_map(|a| (a + 1..criteria.len()).map(move |b| (a, b)))
        .collect();
    let mut out_layers = Vec::with_capacity(layers.len());
    for (li, (name, _)) in layers.iter().enumerate() {
        let scores: Vec<Vec<f64>> = per_criterion
            .iter()
            .map(|(r, _)| r[li].scores.clone())
            .collect();
        let pruned: Vec<Vec<usize>> = per_criterion
            .iter()
            .map(|(_, p)| p.layers[*name].pruned.clone())
            .collect();
        let pair_stats = pairs
            .iter()
            .map(|&(a, b)| PairAgreement {
                a: criteria[a],
                b: criteria[b],
                agreement: overlap(&pruned[a], &pruned[b]),
                spearman: spearman(&scores[a], &scores[b]),
            })
            .collect();
        out_layers.push(LayerComparison {
            layer: name.to_string(),
            scores,
            pruned,
            pairs: pair_stats,
        });
    }

    let n = out_layers.len().max(1) as f64;
    let summary = pairs
        .iter()
        .enumerate()
        .map(|(pi, &(a, b))| PairAgreement {
            a: criteria[a],
            b: criteria[b],
            agreement: out_layers.iter().map(|l| l.pairs[pi].agreement).sum::<f64>() / n,
            spearman: out_layers.iter().map(|l| l.pairs[pi].spearman).sum::<f64>() / n,
        })
        .collect();
    Ok(ComparisonReport {
        criteria: criteria.to_vec(),
        layers: out_layers,
        summary,
    })
}

/// `|A ∩ B| / max(|A|, |B|)` over sorted index lists; 1.0 when both are empty.
pub fn overlap(a: &[usize], b: &[usize]) -> f64 {
    let denom = a.len().max(b.len());
    if denom == 0 {
        return 1.0;
    }
    let common = a.iter().filter(|i| b.contains(i)).count();
    common as f64 / denom as f64
}

/// Ranks starting at 1, tied values sharing their average rank.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman correlation with average ranks for ties. When either vector is
/// constant the correlation is undefined; it is reported as 1.0 if the rank
/// vectors coincide and 0.0 otherwise.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "score vectors must have equal length");
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean) * (y - mean);
        va += (x - mean) * (x - mean);
        vb += (y - mean) * (y - mean);
    }
    if va == 0.0 || vb == 0.0 {
        return if ra == rb { 1.0 } else { 0.0 };
    }
    cov / (va * vb).sqrt()
}
