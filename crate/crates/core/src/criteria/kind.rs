use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which score formula is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Filter magnitude.
    Norm,
    /// Negated sum of similarities to the other filters.
    CosineSum,
    /// Sum of Euclidean distances to the other filters.
    Fpgm,
    /// Sum of `1 - |similarity|` terms.
    Dm,
    /// Norm times the unweighted dissimilarity sum.
    Hc,
    /// Norm times the norm-weighted dissimilarity sum.
    Whc,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Norm,
        Family::CosineSum,
        Family::Fpgm,
        Family::Dm,
        Family::Hc,
        Family::Whc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Norm => "norm",
            Family::CosineSum => "cosine_sum",
            Family::Fpgm => "fpgm",
            Family::Dm => "dm",
            Family::Hc => "hc",
            Family::Whc => "whc",
        }
    }

    pub fn uses_norm(self) -> bool {
        matches!(self, Family::Norm | Family::Hc | Family::Whc)
    }

    pub fn uses_similarity(self) -> bool {
        matches!(
            self,
            Family::CosineSum | Family::Dm | Family::Hc | Family::Whc
        )
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown criterion `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    L1,
    #[default]
    L2,
}

impl FromStr for NormKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(NormKind::L1),
            "l2" => Ok(NormKind::L2),
            _ => Err(format!("unknown norm `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    #[default]
    Cosine,
    /// Cosine of per-row mean-centred filters.
    Correlation,
}

impl FromStr for SimilarityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Ok(SimilarityKind::Cosine),
            "correlation" => Ok(SimilarityKind::Correlation),
            _ => Err(format!("unknown similarity `{s}`")),
        }
    }
}

/// A fully specified criterion. Axes a family ignores are pinned to their
/// defaults (`l2`, `cosine`) so equal criteria compare and serialize equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "RawKind")]
pub struct CriterionKind {
    family: Family,
    norm: NormKind,
    similarity: SimilarityKind,
}

#[derive(Deserialize)]
struct RawKind {
    family: Family,
    #[serde(default)]
    norm: NormKind,
    #[serde(default)]
    similarity: SimilarityKind,
}

impl From<RawKind> for CriterionKind {
    fn from(raw: RawKind) -> Self {
        CriterionKind::new(raw.family, raw.norm, raw.similarity)
    }
}

impl CriterionKind {
    pub fn new(family: Family, norm: NormKind, similarity: SimilarityKind) -> Self {
        Self {
            family,
            norm: if family.uses_norm() { norm } else { NormKind::L2 },
            similarity: if family.uses_similarity() {
                similarity
            } else {
                SimilarityKind::Cosine
            },
        }
    }

    pub fn of(family: Family) -> Self {
        Self::new(family, NormKind::L2, SimilarityKind::Cosine)
    }

    pub fn whc() -> Self {
        Self::of(Family::Whc)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn norm(&self) -> NormKind {
        self.norm
    }

    pub fn similarity(&self) -> SimilarityKind {
        self.similarity
    }

    /// Parses `family[:norm[:similarity]]`, e.g. `whc`, `whc:l1`, `hc:l2:correlation`.
    pub fn parse(spec: &str) -> Result<Self, String> {
        let mut parts = spec.split(':');
        let family: Family = parts.next().unwrap_or_default().parse()?;
        let mut norm = NormKind::L2;
        let mut similarity = SimilarityKind::Cosine;
        for part in parts {
            if let Ok(n) = part.parse::<NormKind>() {
                norm = n;
            } else if let Ok(s) = part.parse::<SimilarityKind>() {
                similarity = s;
            } else {
                return Err(format!("unknown criterion modifier `{part}` in `{spec}`"));
            }
        }
        Ok(Self::new(family, norm, similarity))
    }
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.family)?;
        if self.family.uses_norm() {
            write!(f, ":{}", if self.norm == NormKind::L1 { "l1" } else { "l2" })?;
        }
        if self.family.uses_similarity() {
            let s = match self.similarity {
                SimilarityKind::Cosine => "cosine",
                SimilarityKind::Correlation => "correlation",
            };
            write!(f, ":{s}")?;
        }
        Ok(())
    }
}
