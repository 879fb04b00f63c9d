//! Optional JSON config file. Every field mirrors a command-line flag; flags
//! win when both are given.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Deserialize;

/// `"layers"` may be a comma-separated string or an array of patterns.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum LayersValue {
    List(String),
    Patterns(Vec<String>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub store: Option<PathBuf>,
    pub layers: Option<LayersValue>,
    /// `family[:norm[:similarity]]`.
    pub criterion: Option<String>,
    pub norm: Option<String>,
    pub similarity: Option<String>,
    pub rate: Option<f64>,
    #[serde(default)]
    pub rate_overrides: BTreeMap<String, f64>,
    pub arch: Option<PathBuf>,
    pub preset: Option<String>,
    pub prune_first_conv: Option<bool>,
    pub prune_projections: Option<bool>,
    pub mode: Option<String>,
    pub flops_factor: Option<u64>,
    pub count_mode: Option<String>,
    pub structural_only: Option<bool>,
    pub include_classifier: Option<bool>,
    pub target_drop: Option<f64>,
    pub plan: Option<PathBuf>,
    pub criteria: Option<Vec<String>>,
    pub out: Option<PathBuf>,
}
