//! Convolutional architecture geometry and FLOPs accounting.
//!
//! Counts are multiply-accumulates of the convolutions times a convention
//! factor (2 by default, one multiply plus one add). Drop fractions do not
//! depend on the factor.
//!
//! Totals after pruning are recomputed from surviving channels: a layer keeps
//! `n_out - removed(self)` filters and `n_in - removed(producer)` input
//! channels, where the producer is the unique layer listing it as a
//! successor. [`formula_reduction`] exposes the single-layer closed form
//! `H'W'·(N_out·r)·K²·N_in + Σ_succ H''W''·N_succ·K_succ²·(N_out·r)`, which
//! double-counts the overlap when neighbouring layers are both pruned.

mod preset;

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use preset::{preset, PresetName, PresetOptions};

use crate::error::{Error, Result};
use crate::planner::{prune_count, RateSchedule};
use crate::tensor_io::LayerSelector;

/// Geometry of one convolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub name: String,
    pub n_in: usize,
    pub n_out: usize,
    /// Square kernel size.
    pub k: usize,
    pub out_h: usize,
    pub out_w: usize,
    /// Whether pruned filters may be physically removed. Layers whose output
    /// feeds a residual addition are mask-only.
    pub compaction_safe: bool,
    /// Whether uniform schedules prune this layer at all.
    #[serde(default = "default_true")]
    pub prunable: bool,
}

fn default_true() -> bool {
    true
}

impl ConvLayerSpec {
    pub fn new(name: impl Into<String>, n_in: usize, n_out: usize, k: usize, out_hw: usize) -> Self {
        Self {
            name: name.into(),
            n_in,
            n_out,
            k,
            out_h: out_hw,
            out_w: out_hw,
            compaction_safe: true,
            prunable: true,
        }
    }

    pub fn mask_only(mut self) -> Self {
        self.compaction_safe = false;
        self
    }

    pub fn with_prunable(mut self, prunable: bool) -> Self {
        self.prunable = prunable;
        self
    }

    fn macs_with(&self, n_out: f64, n_in: f64) -> f64 {
        (self.out_h * self.out_w * self.k * self.k) as f64 * n_out * n_in
    }
}

/// A fully connected head, counted only when [`FlopsOptions::include_classifier`] is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub name: String,
    pub n_in: usize,
    pub n_out: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawArch {
    layers: Vec<ConvLayerSpec>,
    #[serde(default)]
    successors: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    classifier: Option<ClassifierSpec>,
}

/// Ordered conv layers plus the channel-feeding relation between them.
///
/// Invariants checked on construction: unique names and positive dimensions,
/// `b.n_in == a.n_out` for every edge `a → b`, an acyclic successor graph,
/// and at most one producer per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawArch", into = "RawArch")]
pub struct ArchSpec {
    layers: Vec<ConvLayerSpec>,
    successors: BTreeMap<String, Vec<String>>,
    classifier: Option<ClassifierSpec>,
    index: HashMap<String, usize>,
    producer: Vec<Option<usize>>,
}

impl TryFrom<RawArch> for ArchSpec {
    type Error = Error;

    fn try_from(raw: RawArch) -> Result<Self> {
        let mut arch = ArchSpec::new(raw.layers, raw.successors)?;
        arch.classifier = raw.classifier;
        Ok(arch)
    }
}

impl From<ArchSpec> for RawArch {
    fn from(a: ArchSpec) -> Self {
        RawArch {
            layers: a.layers,
            successors: a.successors,
            classifier: a.classifier,
        }
    }
}

impl ArchSpec {
    pub fn new(
        layers: Vec<ConvLayerSpec>,
        successors: BTreeMap<String, Vec<String>>,
    ) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, l) in layers.iter().enumerate() {
            if l.n_in == 0 || l.n_out == 0 || l.k == 0 || l.out_h == 0 || l.out_w == 0 {
                return Err(Error::Spec(format!("layer `{}` has a zero dimension", l.name)));
            }
            if index.insert(l.name.clone(), i).is_some() {
                return Err(Error::Spec(format!("duplicate layer name `{}`", l.name)));
            }
        }
        let mut producer: Vec<Option<usize>> = vec![None; layers.len()];
        for (from, tos) in &successors {
            let a = *index
                .get(from)
                .ok_or_else(|| Error::Spec(format!("successor map names unknown layer `{from}`")))?;
            for to in tos {
                let b = *index.get(to).ok_or_else(|| {
                    Error::Spec(format!("`{from}` lists unknown successor `{to}`"))
                })?;
                if layers[b].n_in != layers[a].n_out {
                    return Err(Error::Spec(format!(
                        "edge `{from}` → `{to}`: {to} has n_in {} but {from} has n_out {}",
                        layers[b].n_in, layers[a].n_out
                    )));
                }
                if let Some(prev) = producer[b] {
                    return Err(Error::Spec(if prev == a {
                        format!("edge `{from}` → `{to}` is listed twice")
                    } else {
                        format!(
                            "layer `{to}` has two producers, `{}` and `{from}`",
                            layers[prev].name
                        )
                    }));
                }
                producer[b] = Some(a);
            }
        }
        let arch = Self {
            layers,
            successors,
            classifier: None,
            index,
            producer,
        };
        arch.check_acyclic()?;
        Ok(arch)
    }

    pub fn with_classifier(mut self, classifier: ClassifierSpec) -> Self {
        self.classifier = Some(classifier);
        self
    }

    fn check_acyclic(&self) -> Result<()> {
        // Kahn's algorithm over the successor edges.
        let n = self.layers.len();
        let mut indegree = vec![0usize; n];
        for (b, p) in self.producer.iter().enumerate() {
            if p.is_some() {
                indegree[b] += 1;
            }
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(a) = ready.pop() {
            seen += 1;
            for b in self.successor_indices(a) {
                indegree[b] -= 1;
                if indegree[b] == 0 {
                    ready.push(b);
                }
            }
        }
        if seen != n {
            return Err(Error::Spec("successor graph contains a cycle".into()));
        }
        Ok(())
    }

    fn successor_indices(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        self.successors
            .get(&self.layers[a].name)
            .into_iter()
            .flatten()
            .map(|name| self.index[name])
    }

    pub fn layers(&self) -> &[ConvLayerSpec] {
        &self.layers
    }

    pub fn classifier(&self) -> Option<&ClassifierSpec> {
        self.classifier.as_ref()
    }

    pub fn layer(&self, name: &str) -> Option<&ConvLayerSpec> {
        self.index.get(name).map(|&i| &self.layers[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn successors_of(&self, name: &str) -> &[String] {
        self.successors.get(name).map_or(&[], Vec::as_slice)
    }

    pub fn successor_map(&self) -> &BTreeMap<String, Vec<String>> {
        &self.successors
    }

    /// The layer whose output channels feed `name`, if any.
    pub fn producer_of(&self, name: &str) -> Option<&ConvLayerSpec> {
        let i = self.index_of(name)?;
        self.producer[i].map(|p| &self.layers[p])
    }

    /// Exact-name selector listing the layers in architectural order.
    pub fn selector(&self) -> LayerSelector {
        LayerSelector::new(self.layers.iter().map(|l| l.name.clone()))
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        crate::fsutil::read_json(path)
    }
}

/// Multiply-accumulates of one convolution, times `factor`.
pub fn layer_flops(spec: &ConvLayerSpec, factor: u64) -> u64 {
    (spec.out_h * spec.out_w * spec.n_out * spec.n_in * spec.k * spec.k) as u64 * factor
}

/// How the number of removed filters is derived from a rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// `prune_count(n, r)`, the count a plan would actually remove.
    Integer,
    /// The real product `n · r`.
    #[default]
    Analytic,
}

impl FromStr for CountMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "integer" => Ok(CountMode::Integer),
            "analytic" => Ok(CountMode::Analytic),
            _ => Err(format!("unknown count mode `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsOptions {
    pub mode: CountMode,
    /// FLOPs per multiply-accumulate, usually 1 or 2.
    pub factor: u64,
    /// Count mask-only layers as unpruned (only physically removable work).
    pub structural_only: bool,
    /// Add the classifier's MACs to both totals.
    pub include_classifier: bool,
}

impl Default for FlopsOptions {
    fn default() -> Self {
        Self {
            mode: CountMode::Analytic,
            factor: 2,
            structural_only: false,
            include_classifier: false,
        }
    }
}

impl FlopsOptions {
    pub fn analytic() -> Self {
        Self::default()
    }

    pub fn integer() -> Self {
        Self {
            mode: CountMode::Integer,
            ..Self::default()
        }
    }

    pub fn with_factor(mut self, factor: u64) -> Self {
        self.factor = factor;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerFlops {
    pub base: f64,
    /// FLOPs removed from this layer.
    pub reduced: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub mode: CountMode,
    pub factor: u64,
    pub total_base: f64,
    /// FLOPs of the pruned network.
    pub total_pruned: f64,
    pub drop_fraction: f64,
    pub per_layer: IndexMap<String, LayerFlops>,
}

impl FlopsReport {
    pub fn total_reduction(&self) -> f64 {
        self.total_base - self.total_pruned
    }

    pub fn drop_percent(&self) -> f64 {
        self.drop_fraction * 100.0
    }
}

/// Effective rate per layer, after rejecting overrides that name unknown or
/// unprunable layers.
pub fn layer_rates(arch: &ArchSpec, schedule: &RateSchedule) -> Result<Vec<f64>> {
    for name in schedule.overrides().keys() {
        match arch.layer(name) {
            None => return Err(Error::Spec(format!("schedule names unknown layer `{name}`"))),
            Some(l) if !l.prunable => {
                return Err(Error::Spec(format!(
                    "schedule overrides layer `{name}`, which is marked unprunable"
                )))
            }
            Some(_) => {}
        }
    }
    Ok(arch
        .layers()
        .iter()
        .map(|l| if l.prunable { schedule.rate_for(&l.name) } else { 0.0 })
        .collect())
}

fn removed_filters(n: usize, rate: f64, mode: CountMode) -> f64 {
    match mode {
        CountMode::Integer => prune_count(n, rate) as f64,
        CountMode::Analytic => n as f64 * rate,
    }
}

/// FLOPs before and after pruning every layer at its scheduled rate.
pub fn flops_drop(arch: &ArchSpec, schedule: &RateSchedule, opts: FlopsOptions) -> Result<FlopsReport> {
    let rates = layer_rates(arch, schedule)?;
    let removed: Vec<f64> = arch
        .layers()
        .iter()
        .zip(&rates)
        .map(|(l, &r)| {
            if opts.structural_only && !l.compaction_safe {
                0.0
            } else {
                removed_filters(l.n_out, r, opts.mode)
            }
        })
        .collect();

    let factor = opts.factor as f64;
    let mut per_layer = IndexMap::with_capacity(arch.layers().len());
    let (mut total_base, mut total_pruned) = (0.0, 0.0);
    for (i, l) in arch.layers().iter().enumerate() {
        let removed_in = arch.producer[i].map_or(0.0, |p| removed[p]);
        let base = l.macs_with(l.n_out as f64, l.n_in as f64) * factor;
        let kept = l.macs_with(l.n_out as f64 - removed[i], l.n_in as f64 - removed_in) * factor;
        total_base += base;
        total_pruned += kept;
        per_layer.insert(
            l.name.clone(),
            LayerFlops {
                base,
                reduced: base - kept,
            },
        );
    }
    if opts.include_classifier {
        if let Some(c) = arch.classifier() {
            let base = (c.n_in * c.n_out) as f64 * factor;
            total_base += base;
            total_pruned += base;
            per_layer.insert(c.name.clone(), LayerFlops { base, reduced: 0.0 });
        }
    }
    Ok(FlopsReport {
        mode: opts.mode,
        factor: opts.factor,
        total_base,
        total_pruned,
        drop_fraction: (total_base - total_pruned) / total_base,
        per_layer,
    })
}

/// FLOPs removed by pruning only `layer` at `rate`, evaluated term by term
/// from the closed form: its own output filters plus the matching input
/// channels of each successor.
pub fn formula_reduction(
    arch: &ArchSpec,
    layer: &str,
    rate: f64,
    mode: CountMode,
    factor: u64,
) -> Result<f64> {
    let l = arch
        .layer(layer)
        .ok_or_else(|| Error::Spec(format!("unknown layer `{layer}`")))?;
    let pruned = removed_filters(l.n_out, rate, mode);
    let own = (l.out_h * l.out_w) as f64 * pruned * (l.k * l.k) as f64 * l.n_in as f64;
    let downstream: f64 = arch
        .successors_of(layer)
        .iter()
        .map(|s| {
            let s = arch.layer(s).expect("validated successor");
            (s.out_h * s.out_w) as f64 * s.n_out as f64 * (s.k * s.k) as f64 * pruned
        })
        .sum();
    Ok((own + downstream) * factor as f64)
}

/// Drop fraction for each uniform rate, in input order.
pub fn rate_sweep(arch: &ArchSpec, rates: &[f64], opts: FlopsOptions) -> Result<Vec<(f64, f64)>> {
    rates
        .iter()
        .map(|&r| {
            let schedule = RateSchedule::uniform(r)?;
            Ok((r, flops_drop(arch, &schedule, opts)?.drop_fraction))
        })
        .collect()
}

/// `count` evenly spaced rates from `lo` to `hi` inclusive.
pub fn rate_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveredRate {
    pub target_fraction: f64,
    pub rate: f64,
    pub drop_fraction: f64,
}

/// Bisects for the uniform rate in `[lo, hi]` whose drop fraction is closest
/// to `target_fraction`. Returns `None` when the target lies outside the
/// drop fractions reachable in that interval.
pub fn recover_rate(
    arch: &ArchSpec,
    target_fraction: f64,
    lo: f64,
    hi: f64,
    opts: FlopsOptions,
) -> Result<Option<RecoveredRate>> {
    let drop_at = |r: f64| -> Result<f64> {
        Ok(flops_drop(arch, &RateSchedule::uniform(r)?, opts)?.drop_fraction)
    };
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (drop_at(a)?, drop_at(b)?);
    if target_fraction < fa || target_fraction > fb {
        return Ok(None);
    }
    for _ in 0..64 {
        let mid = 0.5 * (a + b);
        if drop_at(mid)? < target_fraction {
            a = mid;
        } else {
            b = mid;
        }
    }
    let (da, db) = (drop_at(a)?, drop_at(b)?);
    let (rate, drop_fraction) = if (da - target_fraction).abs() <= (db - target_fraction).abs() {
        (a, da)
    } else {
        (b, db)
    };
    Ok(Some(RecoveredRate {
        target_fraction,
        rate,
        drop_fraction,
    }))
}
