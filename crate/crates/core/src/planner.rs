//! Single-shot pruning plans and their application to weight stores.
//!
//! Scores are computed once on the unpruned store; each layer then drops its
//! `prune_count(n_out, rate)` lowest-scoring filters. Because scoring never
//! looks at already-pruned layers, the order in which layers are visited does
//! not affect the plan.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::archmodel::ArchSpec;
use crate::criteria::{pruning_order, CriterionKind, ScoreReport};
use crate::error::{Error, Result};
use crate::tensor_io::{select_conv_layers, LayerSelector, Tensor, TensorStore};

/// Absorbs binary representation error in `rate * n` (e.g. `0.29 * 100`
/// evaluates to `28.999999999999996`) before flooring.
const RATE_SLACK: f64 = 1e-9;

/// Number of filters removed from a layer of `n_filters` at `rate`:
/// `floor(rate · n)`, so the realised rate never exceeds the requested one.
pub fn prune_count(n_filters: usize, rate: f64) -> usize {
    let raw = (rate * n_filters as f64 + RATE_SLACK).floor();
    if raw <= 0.0 {
        0
    } else {
        (raw as usize).min(n_filters)
    }
}

fn check_rate(what: &str, rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Plan(format!("{what} rate {rate} is outside [0, 1]")));
    }
    Ok(())
}

/// Per-layer pruning rates: a default plus named overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSchedule {
    default_rate: f64,
    #[serde(default)]
    overrides: BTreeMap<String, f64>,
}

impl RateSchedule {
    pub fn new(default_rate: f64, overrides: BTreeMap<String, f64>) -> Result<Self> {
        check_rate("default", default_rate)?;
        for (name, &r) in &overrides {
            check_rate(&format!("layer `{name}`"), r)?;
        }
        Ok(Self {
            default_rate,
            overrides,
        })
    }

    /// The same rate for every layer.
    pub fn uniform(rate: f64) -> Result<Self> {
        Self::new(rate, BTreeMap::new())
    }

    pub fn default_rate(&self) -> f64 {
        self.default_rate
    }

    pub fn overrides(&self) -> &BTreeMap<String, f64> {
        &self.overrides
    }

    pub fn rate_for(&self, layer: &str) -> f64 {
        self.overrides.get(layer).copied().unwrap_or(self.default_rate)
    }

    /// Parses `name=rate` pairs separated by commas.
    pub fn parse_overrides(list: &str) -> Result<BTreeMap<String, f64>> {
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|pair| {
                let (name, rate) = pair
                    .rsplit_once('=')
                    .ok_or_else(|| Error::Plan(format!("override `{pair}` is not name=rate")))?;
                let rate: f64 = rate
                    .trim()
                    .parse()
                    .map_err(|_| Error::Plan(format!("override `{pair}` has a bad rate")))?;
                Ok((name.trim().to_string(), rate))
            })
            .collect()
    }
}

/// The deterministic ordering used to choose pruned filters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TieRule {
    /// Ascending score, ties by ascending index; prune from the front.
    #[default]
    #[serde(rename = "score_asc_index_asc")]
    ScoreAscIndexAsc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPlan {
    /// Pruned filter indices, ascending.
    pub pruned: Vec<usize>,
    pub n_out: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
}

impl LayerPlan {
    pub fn kept(&self) -> usize {
        self.n_out.saturating_sub(self.pruned.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningPlan {
    pub criterion: CriterionKind,
    pub tie_rule: TieRule,
    /// Layers in selection order.
    pub layers: IndexMap<String, LayerPlan>,
}

impl PruningPlan {
    /// A plan that prunes nothing.
    pub fn empty(criterion: CriterionKind) -> Self {
        Self {
            criterion,
            tie_rule: TieRule::ScoreAscIndexAsc,
            layers: IndexMap::new(),
        }
    }

    /// `(kept, pruned)` per layer.
    pub fn counts(&self) -> IndexMap<&str, (usize, usize)> {
        self.layers
            .iter()
            .map(|(name, l)| (name.as_str(), (l.kept(), l.pruned.len())))
            .collect()
    }

    pub fn total_pruned(&self) -> usize {
        self.layers.values().map(|l| l.pruned.len()).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Prunes the lowest-scoring `prune_count(n_out, rate)` filters of every
/// reported layer.
pub fn build_plan(reports: &[ScoreReport], schedule: &RateSchedule) -> Result<PruningPlan> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Plan("no score reports to plan from".into()))?;
    let mut plan = PruningPlan::empty(first.criterion);
    for r in reports {
        if r.criterion != first.criterion {
            return Err(Error::Plan(format!(
                "layer `{}` was scored with {} but `{}` with {}",
                r.layer_name, r.criterion, first.layer_name, first.criterion
            )));
        }
        if r.scores.is_empty() {
            return Err(Error::Plan(format!("layer `{}` has no scores", r.layer_name)));
        }
        if let Some(i) = r.scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Plan(format!(
                "layer `{}` has a non-finite score at index {i}",
                r.layer_name
            )));
        }
        if plan.layers.contains_key(&r.layer_name) {
            return Err(Error::Plan(format!("layer `{}` reported twice", r.layer_name)));
        }
    }
    for name in schedule.overrides().keys() {
        if !reports.iter().any(|r| &r.layer_name == name) {
            return Err(Error::Plan(format!("rate given for unknown layer `{name}`")));
        }
    }
    for r in reports {
        let rate = schedule.rate_for(&r.layer_name);
        let n_out = r.scores.len();
        let mut pruned: Vec<usize> = pruning_order(&r.scores)
            .into_iter()
            .take(prune_count(n_out, rate))
            .collect();
        pruned.sort_unstable();
        plan.layers.insert(
            r.layer_name.clone(),
            LayerPlan {
                pruned,
                n_out,
                rate: Some(rate),
            },
        );
    }
    Ok(plan)
}

/// A reason a plan cannot be applied to a store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    Selection(String),
    UnknownLayer { layer: String },
    NOutMismatch { layer: String, plan: usize, store: usize },
    OutOfRange { layer: String, index: usize, n_out: usize },
    Duplicate { layer: String, index: usize },
    Unsorted { layer: String },
    CountMismatch { layer: String, expected: usize, actual: usize },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Selection(msg) => write!(f, "selection: {msg}"),
            Diagnostic::UnknownLayer { layer } => {
                write!(f, "layer `{layer}` is not among the selected conv layers")
            }
            Diagnostic::NOutMismatch { layer, plan, store } => write!(
                f,
                "layer `{layer}`: plan expects {plan} filters, store has {store}"
            ),
            Diagnostic::OutOfRange { layer, index, n_out } => {
                write!(f, "layer `{layer}`: index {index} out of range for {n_out} filters")
            }
            Diagnostic::Duplicate { layer, index } => {
                write!(f, "layer `{layer}`: index {index} listed more than once")
            }
            Diagnostic::Unsorted { layer } => {
                write!(f, "layer `{layer}`: pruned indices are not ascending")
            }
            Diagnostic::CountMismatch {
                layer,
                expected,
                actual,
            } => write!(
                f,
                "layer `{layer}`: rate implies {expected} pruned filters, plan lists {actual}"
            ),
        }
    }
}

/// Checks `plan` against the layers `selector` picks from `store`. An empty
/// result means the plan is applicable.
pub fn validate_plan(
    plan: &PruningPlan,
    store: &TensorStore,
    selector: &LayerSelector,
) -> Vec<Diagnostic> {
    let selected: HashMap<&str, &Tensor> = match select_conv_layers(store, selector) {
        Ok(layers) => layers.into_iter().collect(),
        Err(e) => return vec![Diagnostic::Selection(e.to_string())],
    };
    let mut out = Vec::new();
    for (name, layer) in &plan.layers {
        match selected.get(name.as_str()) {
            None => out.push(Diagnostic::UnknownLayer { layer: name.clone() }),
            Some(t) if t.shape()[0] != layer.n_out => out.push(Diagnostic::NOutMismatch {
                layer: name.clone(),
                plan: layer.n_out,
                store: t.shape()[0],
            }),
            Some(_) => {}
        }
        check_indices(name, layer, &mut out);
    }
    out
}

fn check_indices(name: &str, layer: &LayerPlan, out: &mut Vec<Diagnostic>) {
    let mut seen = BTreeSet::new();
    for &index in &layer.pruned {
        if index >= layer.n_out {
            out.push(Diagnostic::OutOfRange {
                layer: name.to_string(),
                index,
                n_out: layer.n_out,
            });
        }
        if !seen.insert(index) {
            out.push(Diagnostic::Duplicate {
                layer: name.to_string(),
                index,
            });
        }
    }
    if layer.pruned.windows(2).any(|w| w[0] > w[1]) {
        out.push(Diagnostic::Unsorted {
            layer: name.to_string(),
        });
    }
    if let Some(rate) = layer.rate {
        let expected = prune_count(layer.n_out, rate);
        if expected != layer.pruned.len() {
            out.push(Diagnostic::CountMismatch {
                layer: name.to_string(),
                expected,
                actual: layer.pruned.len(),
            });
        }
    }
}

fn reject_diagnostics(diags: Vec<Diagnostic>) -> Result<()> {
    if diags.is_empty() {
        return Ok(());
    }
    let msg: Vec<String> = diags.iter().map(ToString::to_string).collect();
    Err(Error::Plan(format!("plan does not match store: {}", msg.join("; "))))
}

/// Zeroes the pruned filters of every planned layer; shapes are unchanged.
pub fn apply_soft(
    store: &TensorStore,
    plan: &PruningPlan,
    selector: &LayerSelector,
) -> Result<TensorStore> {
    reject_diagnostics(validate_plan(plan, store, selector))?;
    let mut out = store.clone();
    for (name, layer) in &plan.layers {
        if layer.pruned.is_empty() {
            continue;
        }
        let tensor = store.get(name).expect("validated");
        out.replace(name, zero_filters(tensor, &layer.pruned));
    }
    Ok(out)
}

fn zero_filters(tensor: &Tensor, rows: &[usize]) -> Tensor {
    let shape = tensor.shape().to_vec();
    let row_len: usize = shape[1..].iter().product();
    let mut data = tensor.data().to_vec();
    for &r in rows {
        data[r * row_len..(r + 1) * row_len].fill(0.0);
    }
    Tensor::new(shape, data).expect("shape unchanged")
}

/// Removes pruned filters from compaction-safe layers together with the
/// matching input channels of their successors. Mask-only layers are zeroed
/// in place instead.
pub fn apply_hard(store: &TensorStore, plan: &PruningPlan, arch: &ArchSpec) -> Result<TensorStore> {
    reject_diagnostics(validate_plan(plan, store, &arch.selector()))?;

    let mut drop_out: HashMap<&str, BTreeSet<usize>> = HashMap::new();
    let mut mask: HashMap<&str, &[usize]> = HashMap::new();
    let mut drop_in: HashMap<&str, BTreeSet<usize>> = HashMap::new();
    for (name, layer) in &plan.layers {
        if layer.pruned.is_empty() {
            continue;
        }
        let spec = arch
            .layer(name)
            .ok_or_else(|| Error::Structural(format!("plan layer `{name}` is not in the architecture")))?;
        if spec.compaction_safe {
            if layer.pruned.len() == layer.n_out {
                return Err(Error::Plan(format!(
                    "hard pruning cannot remove every filter of `{name}`"
                )));
            }
            let set: BTreeSet<usize> = layer.pruned.iter().copied().collect();
            for succ in arch.successors_of(name) {
                drop_in.insert(succ.as_str(), set.clone());
            }
            drop_out.insert(name.as_str(), set);
        } else {
            mask.insert(name.as_str(), &layer.pruned);
        }
    }

    let mut out = store.clone();
    for spec in arch.layers() {
        let name = spec.name.as_str();
        let (rows, cols, zero) = (drop_out.get(name), drop_in.get(name), mask.get(name));
        if rows.is_none() && cols.is_none() && zero.is_none() {
            continue;
        }
        let tensor = store
            .get(name)
            .ok_or_else(|| Error::Structural(format!("layer `{name}` missing from store")))?;
        let expected = [spec.n_out, spec.n_in, spec.k, spec.k];
        if tensor.shape() != expected {
            return Err(Error::Structural(format!(
                "layer `{name}` has shape {:?}, architecture expects {expected:?}",
                tensor.shape()
            )));
        }
        let mut t = tensor.clone();
        if let Some(z) = zero {
            t = zero_filters(&t, z);
        }
        t = compact(&t, rows, cols);
        out.replace(name, t);
    }
    Ok(out)
}

fn compact(t: &Tensor, drop_rows: Option<&BTreeSet<usize>>, drop_cols: Option<&BTreeSet<usize>>) -> Tensor {
    let s = t.shape();
    let (n_out, n_in, kk) = (s[0], s[1], s[2] * s[3]);
    let keep = |n: usize, drop: Option<&BTreeSet<usize>>| -> Vec<usize> {
        (0..n).filter(|i| drop.is_none_or(|d| !d.contains(i))).collect()
    };
    let rows = keep(n_out, drop_rows);
    let cols = keep(n_in, drop_cols);
    let mut data = Vec::with_capacity(rows.len() * cols.len() * kk);
    for &r in &rows {
        for &c in &cols {
            let start = (r * n_in + c) * kk;
            data.extend_from_slice(&t.data()[start..start + kk]);
        }
    }
    Tensor::new(vec![rows.len(), cols.len(), s[2], s[3]], data).expect("non-empty compaction")
}
