//! Standard ResNet geometries.
//!
//! CIFAR variants (20/32/56/110) use a 3×3 stem with 16 channels and three
//! stages of basic blocks (widths 16/32/64 at 32×32, 16×16, 8×8) with 1×1
//! projection shortcuts where the width changes. ImageNet variants follow the
//! torchvision layout: 7×7 stride-2 stem at 112×112, max-pool to 56×56, then
//! four stages of widths 64/128/256/512 (bottleneck expansion 4 for
//! ResNet-50, stride on the 3×3 conv).
//!
//! Tensor names follow the torchvision convention (`conv1.weight`,
//! `layer{s}.{b}.conv{c}.weight`, `layer{s}.{b}.downsample.0.weight`), so a
//! preset doubles as an exact layer selector.
//!
//! Successor edges: the stem feeds the first block, each conv feeds the next
//! conv of its block, and a block-final conv feeds the first conv (and
//! projection) of the following block. Block-final convs and projections are
//! mask-only because their outputs meet at a residual addition; the stem is
//! mask-only unless the first block has a projection shortcut.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ArchSpec, ClassifierSpec, ConvLayerSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Resnet20,
    Resnet32,
    Resnet56,
    Resnet110,
    Resnet18,
    Resnet34,
    Resnet50,
}

impl PresetName {
    pub const ALL: [PresetName; 7] = [
        PresetName::Resnet20,
        PresetName::Resnet32,
        PresetName::Resnet56,
        PresetName::Resnet110,
        PresetName::Resnet18,
        PresetName::Resnet34,
        PresetName::Resnet50,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Resnet20 => "resnet20",
            PresetName::Resnet32 => "resnet32",
            PresetName::Resnet56 => "resnet56",
            PresetName::Resnet110 => "resnet110",
            PresetName::Resnet18 => "resnet18",
            PresetName::Resnet34 => "resnet34",
            PresetName::Resnet50 => "resnet50",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['-', '_'], "");
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == key)
            .ok_or_else(|| Error::Spec(format!("unknown preset `{s}`")))
    }
}

/// Which layers a uniform schedule may prune.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresetOptions {
    pub prune_first_conv: bool,
    pub prune_projections: bool,
}

impl Default for PresetOptions {
    fn default() -> Self {
        Self {
            prune_first_conv: true,
            prune_projections: true,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Block {
    Basic,
    Bottleneck,
}

struct Builder {
    layers: Vec<ConvLayerSpec>,
    successors: BTreeMap<String, Vec<String>>,
}

impl Builder {
    fn push(&mut self, layer: ConvLayerSpec) -> String {
        let name = layer.name.clone();
        self.layers.push(layer);
        name
    }

    fn edge(&mut self, from: &str, to: &str) {
        self.successors
            .entry(from.to_string())
            .or_default()
            .push(to.to_string());
    }
}

pub fn preset(name: PresetName, opts: PresetOptions) -> Result<ArchSpec> {
    match name {
        PresetName::Resnet20 => cifar_resnet(20, opts),
        PresetName::Resnet32 => cifar_resnet(32, opts),
        PresetName::Resnet56 => cifar_resnet(56, opts),
        PresetName::Resnet110 => cifar_resnet(110, opts),
        PresetName::Resnet18 => imagenet_resnet(Block::Basic, [2, 2, 2, 2], opts),
        PresetName::Resnet34 => imagenet_resnet(Block::Basic, [3, 4, 6, 3], opts),
        PresetName::Resnet50 => imagenet_resnet(Block::Bottleneck, [3, 4, 6, 3], opts),
    }
}

fn cifar_resnet(depth: usize, opts: PresetOptions) -> Result<ArchSpec> {
    let blocks = (depth - 2) / 6;
    let stages = [(16, 32), (32, 16), (64, 8)];
    build(Block::Basic, 16, 3, 32, &stages, &[blocks; 3], 10, opts)
}

fn imagenet_resnet(block: Block, counts: [usize; 4], opts: PresetOptions) -> Result<ArchSpec> {
    let stages = [(64, 56), (128, 28), (256, 14), (512, 7)];
    build(block, 64, 7, 112, &stages, &counts, 1000, opts)
}

#[allow(clippy::too_many_arguments)]
fn build(
    block: Block,
    stem_width: usize,
    stem_k: usize,
    stem_hw: usize,
    stages: &[(usize, usize)],
    counts: &[usize],
    classes: usize,
    opts: PresetOptions,
) -> Result<ArchSpec> {
    let expansion = match block {
        Block::Basic => 1,
        Block::Bottleneck => 4,
    };
    let mut b = Builder {
        layers: Vec::new(),
        successors: BTreeMap::new(),
    };
    let stem = ConvLayerSpec::new("conv1.weight", 3, stem_width, stem_k, stem_hw)
        .with_prunable(opts.prune_first_conv);
    let stem_idx = b.layers.len();
    let mut feeder = b.push(stem);
    let mut in_ch = stem_width;
    // Spatial size of the tensor entering the current block.
    let mut in_hw = stages[0].1;

    for (s, (&(width, hw), &count)) in stages.iter().zip(counts).enumerate() {
        for blk in 0..count {
            let prefix = format!("layer{}.{blk}", s + 1);
            let out_ch = width * expansion;
            let needs_projection = blk == 0 && in_ch != out_ch;
            let convs: Vec<ConvLayerSpec> = match block {
                Block::Basic => vec![
                    ConvLayerSpec::new(format!("{prefix}.conv1.weight"), in_ch, width, 3, hw),
                    ConvLayerSpec::new(format!("{prefix}.conv2.weight"), width, width, 3, hw),
                ],
                Block::Bottleneck => vec![
                    ConvLayerSpec::new(format!("{prefix}.conv1.weight"), in_ch, width, 1, in_hw),
                    ConvLayerSpec::new(format!("{prefix}.conv2.weight"), width, width, 3, hw),
                    ConvLayerSpec::new(format!("{prefix}.conv3.weight"), width, out_ch, 1, hw),
                ],
            };
            let last = convs.len() - 1;
            let mut prev: Option<String> = None;
            for (c, conv) in convs.into_iter().enumerate() {
                let conv = if c == last { conv.mask_only() } else { conv };
                let name = b.push(conv);
                match &prev {
                    None => b.edge(&feeder.clone(), &name),
                    Some(p) => b.edge(&p.clone(), &name),
                }
                prev = Some(name);
            }
            if needs_projection {
                let proj = ConvLayerSpec::new(format!("{prefix}.downsample.0.weight"), in_ch, out_ch, 1, hw)
                    .mask_only()
                    .with_prunable(opts.prune_projections);
                let name = b.push(proj);
                b.edge(&feeder.clone(), &name);
            } else if feeder == "conv1.weight" {
                // stem output meets an identity shortcut
                b.layers[stem_idx].compaction_safe = false;
            }
            feeder = prev.expect("block has convs");
            in_ch = out_ch;
            in_hw = hw;
        }
    }
    let arch = ArchSpec::new(b.layers, b.successors)?;
    Ok(arch.with_classifier(ClassifierSpec {
        name: "fc.weight".into(),
        n_in: in_ch,
        n_out: classes,
    }))
}
