//! Rank stability of a criterion under additive perturbations.

use serde::{Deserialize, Serialize};

use super::{pruning_order, score, similarity, vector_norm, CriterionKind, FilterMatrix};
use super::{NormKind, SimilarityKind};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTrial {
    /// Fraction of `delta` applied in this trial.
    pub scale: f64,
    pub scores: Vec<f64>,
    /// Pruning order of the perturbed scores.
    pub ranking: Vec<usize>,
    /// Filter pairs ordered differently than in the clean ranking.
    pub inversions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub criterion: CriterionKind,
    pub clean_scores: Vec<f64>,
    pub clean_ranking: Vec<usize>,
    pub trials: Vec<ProbeTrial>,
}

impl ProbeReport {
    pub fn max_inversions(&self) -> usize {
        self.trials.iter().map(|t| t.inversions).max().unwrap_or(0)
    }
}

/// Scores `fm` and `fm + (t / trials) · delta` for `t = 1..=trials` and counts
/// how many filter pairs swap order in the pruning ranking. `trials` below 1
/// is treated as 1, i.e. only the full perturbation is evaluated.
pub fn perturbation_probe(
    fm: &FilterMatrix,
    kind: CriterionKind,
    delta: &FilterMatrix,
    trials: usize,
) -> Result<ProbeReport> {
    let clean = score(fm, kind)?;
    let clean_ranking = pruning_order(&clean.scores);
    let trials = trials.max(1);
    let mut out = Vec::with_capacity(trials);
    for t in 1..=trials {
        let scale = t as f64 / trials as f64;
        let perturbed = fm.add_scaled(delta, scale)?;
        let scores = score(&perturbed, kind)?.scores;
        let ranking = pruning_order(&scores);
        let inversions = rank_inversions(&clean_ranking, &ranking);
        out.push(ProbeTrial {
            scale,
            scores,
            ranking,
            inversions,
        });
    }
    Ok(ProbeReport {
        criterion: kind,
        clean_scores: clean.scores,
        clean_ranking,
        trials: out,
    })
}

/// Number of element pairs whose relative order differs between two
/// permutations of `0..n` (the Kendall distance).
pub fn rank_inversions(a: &[usize], b: &[usize]) -> usize {
    assert_eq!(a.len(), b.len(), "rankings must have equal length");
    let n = a.len();
    let mut pos_a = vec![0; n];
    let mut pos_b = vec![0; n];
    for (p, &i) in a.iter().enumerate() {
        pos_a[i] = p;
    }
    for (p, &i) in b.iter().enumerate() {
        pos_b[i] = p;
    }
    let mut count = 0;
    for i in 0..n {
        for j in i + 1..n {
            if (pos_a[i] < pos_a[j]) != (pos_b[i] < pos_b[j]) {
                count += 1;
            }
        }
    }
    count
}

/// Dissimilarity terms between two filters as they enter HC and WHC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTerms {
    /// `1 - |S_ab|`, the unweighted term.
    pub dm: f64,
    /// `‖b‖ · dm`: what `b` contributes to the WHC sum of `a`.
    pub weighted_for_a: f64,
    /// `‖a‖ · dm`: what `a` contributes to the WHC sum of `b`.
    pub weighted_for_b: f64,
}

pub fn pair_terms(
    a: &[f64],
    b: &[f64],
    norm: NormKind,
    similarity_kind: SimilarityKind,
) -> Result<PairTerms> {
    let fm = FilterMatrix::from_rows(&[a, b])?;
    let s = similarity(&fm, similarity_kind);
    let dm = 1.0 - s.get(0, 1).abs();
    Ok(PairTerms {
        dm,
        weighted_for_a: vector_norm(b, norm) * dm,
        weighted_for_b: vector_norm(a, norm) * dm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::Family;

    #[test]
    fn small_filter_interference() {
        let clean = pair_terms(&[100.0, 0.0], &[0.0, 0.1], NormKind::L2, SimilarityKind::Cosine)
            .unwrap();
        let moved = pair_terms(&[100.0, 0.0], &[-0.1, 0.0], NormKind::L2, SimilarityKind::Cosine)
            .unwrap();
        assert_eq!(clean.dm, 1.0);
        assert_eq!(moved.dm, 0.0);
        assert_eq!(clean.weighted_for_a, 0.1);
        assert_eq!(moved.weighted_for_a, 0.0);
    }

    #[test]
    fn zero_delta_gives_no_inversions() {
        let fm = FilterMatrix::from_rows(&[[1.0, 2.0], [0.5, -1.0], [3.0, 0.1]]).unwrap();
        let delta = FilterMatrix::new(3, 2, vec![0.0; 6]).unwrap();
        let report = perturbation_probe(&fm, CriterionKind::whc(), &delta, 4).unwrap();
        assert_eq!(report.trials.len(), 4);
        assert_eq!(report.max_inversions(), 0);
        assert_eq!(report.trials[3].scale, 1.0);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let fm = FilterMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let delta = FilterMatrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert!(perturbation_probe(&fm, CriterionKind::of(Family::Hc), &delta, 1).is_err());
    }

    #[test]
    fn inversion_counting() {
        assert_eq!(rank_inversions(&[0, 1, 2], &[0, 1, 2]), 0);
        assert_eq!(rank_inversions(&[0, 1, 2], &[2, 1, 0]), 3);
        assert_eq!(rank_inversions(&[0, 1, 2], &[1, 0, 2]), 1);
    }
}
