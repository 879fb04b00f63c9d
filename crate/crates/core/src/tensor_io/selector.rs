use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Tensor, TensorStore};
use crate::error::{Error, Result};

/// Layer-selection config file: `{ "layers": [<name or glob>, ...] }`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub layers: Vec<String>,
}

/// Ordered list of exact names or globs (`*`, `?`) choosing the conv weights
/// of a store. The pattern order, not file order, defines layer indices.
///
/// Names matched by one glob are ordered with [`natural_cmp`], so
/// `layer1.9.conv1.weight` precedes `layer1.10.conv1.weight`. A name matched
/// by several patterns keeps the position of its first match.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSelector {
    patterns: Vec<String>,
    expected_rank: usize,
}

impl LayerSelector {
    pub fn new<I, S>(patterns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            patterns: patterns.into_iter().map(Into::into).collect(),
            expected_rank: 4,
        }
    }

    pub fn with_rank(mut self, rank: usize) -> Self {
        self.expected_rank = rank;
        self
    }

    /// Parses a comma-separated pattern list such as `"conv1.weight,layer*.weight"`.
    pub fn parse_list(list: &str) -> Self {
        Self::new(list.split(',').map(str::trim).filter(|s| !s.is_empty()))
    }

    pub fn from_config(config: SelectionConfig) -> Self {
        Self::new(config.layers)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let config: SelectionConfig = crate::fsutil::read_json(path)?;
        Ok(Self::from_config(config))
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }

    pub fn expected_rank(&self) -> usize {
        self.expected_rank
    }

    /// Matched names in layer order, without rank checks.
    pub fn matching_names<'a>(&self, store: &'a TensorStore) -> Result<Vec<&'a str>> {
        let mut out: Vec<&str> = Vec::new();
        for pattern in &self.patterns {
            if is_glob(pattern) {
                let mut hits: Vec<&str> = store
                    .names()
                    .filter(|name| glob_match(pattern, name))
                    .collect();
                hits.sort_by(|a, b| natural_cmp(a, b));
                for name in hits {
                    if !out.contains(&name) {
                        out.push(name);
                    }
                }
            } else {
                let (name, _) = store
                    .iter()
                    .find(|(n, _)| *n == pattern.as_str())
                    .ok_or_else(|| {
                        Error::Selection(format!("no tensor named `{pattern}` in store"))
                    })?;
                if !out.contains(&name) {
                    out.push(name);
                }
            }
        }
        Ok(out)
    }
}

/// Applies `sel` to `store`, returning the selected tensors in layer order.
pub fn select_conv_layers<'a>(
    store: &'a TensorStore,
    sel: &LayerSelector,
) -> Result<Vec<(&'a str, &'a Tensor)>> {
    let names = sel.matching_names(store)?;
    if names.is_empty() {
        return Err(Error::Selection(format!(
            "patterns {:?} matched no tensors",
            sel.patterns
        )));
    }
    names
        .into_iter()
        .map(|name| {
            let tensor = store.get(name).expect("name came from store");
            if tensor.rank() != sel.expected_rank {
                return Err(Error::Selection(format!(
                    "tensor `{name}` has rank {} (shape {:?}), expected rank {}",
                    tensor.rank(),
                    tensor.shape(),
                    sel.expected_rank
                )));
            }
            Ok((name, tensor))
        })
        .collect()
}

fn is_glob(pattern: &str) -> bool {
    pattern.contains(['*', '?'])
}

fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let (mut pi, mut ti) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '*')
}

/// Compares strings treating maximal ASCII digit runs as numbers.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut a, mut b) = (a.as_bytes(), b.as_bytes());
    loop {
        match (a.first(), b.first()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) if x.is_ascii_digit() && y.is_ascii_digit() => {
                let da = a.iter().take_while(|c| c.is_ascii_digit()).count();
                let db = b.iter().take_while(|c| c.is_ascii_digit()).count();
                let na = trim_zeros(&a[..da]);
                let nb = trim_zeros(&b[..db]);
                let ord = na
                    .len()
                    .cmp(&nb.len())
                    .then_with(|| na.cmp(nb))
                    .then_with(|| da.cmp(&db));
                if ord != Ordering::Equal {
                    return ord;
                }
                a = &a[da..];
                b = &b[db..];
            }
            (Some(x), Some(y)) => {
                if x != y {
                    return x.cmp(y);
                }
                a = &a[1..];
                b = &b[1..];
            }
        }
    }
}

fn trim_zeros(digits: &[u8]) -> &[u8] {
    let lead = digits.iter().take_while(|&&c| c == b'0').count();
    &digits[lead..]
}
