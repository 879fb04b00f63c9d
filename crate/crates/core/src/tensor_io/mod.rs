//! Named weight tensors, their on-disk container and conv-layer selection.
//!
//! A [`TensorStore`] is an ordered (lexicographic by name) collection of dense
//! 32-bit tensors. Stores are immutable once validated; every pruning
//! operation returns a new store.

mod container;
mod selector;

use std::collections::BTreeMap;

pub use container::{decode_store, encode_store, load_store, save_store};
pub use selector::{natural_cmp, select_conv_layers, LayerSelector, SelectionConfig};

use crate::error::{Error, Result};

/// A dense row-major tensor of 32-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor, checking that `shape` is made of positive dimensions
    /// whose product equals `data.len()`.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if let Some(pos) = shape.iter().position(|&d| d == 0) {
            return Err(Error::Shape(format!(
                "dimension {pos} of shape {shape:?} is zero"
            )));
        }
        let numel = numel(&shape)
            .ok_or_else(|| Error::Shape(format!("shape {shape:?} overflows usize")))?;
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = numel(&shape).unwrap_or(0);
        Self::new(shape, vec![0.0; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<f32>) {
        (self.shape, self.data)
    }

    /// Index of the first NaN/Inf value, if any.
    pub fn first_non_finite(&self) -> Option<(usize, f32)> {
        self.data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite())
            .map(|(i, v)| (i, *v))
    }
}

pub(crate) fn numel(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

/// Named collection of tensors, iterated in lexicographic name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorStore {
    entries: BTreeMap<String, Tensor>,
}

impl TensorStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a tensor after rejecting non-finite values. Replaces any
    /// previous entry with the same name.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if let Some((index, value)) = tensor.first_non_finite() {
            return Err(Error::NonFinite {
                tensor: name,
                index,
                value,
            });
        }
        self.entries.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Replaces an existing entry. Used by the planner to build pruned copies.
    pub(crate) fn replace(&mut self, name: &str, tensor: Tensor) {
        if let Some(slot) = self.entries.get_mut(name) {
            *slot = tensor;
        }
    }
}
