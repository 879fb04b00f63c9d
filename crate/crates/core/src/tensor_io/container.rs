// Tensor container: the safetensors layout restricted to F32.
//
//   [u64 LE header length N][N bytes JSON header][payload, little-endian]
//
// Header entries map tensor names to {"dtype": "F32", "shape": [...],
// "data_offsets": [begin, end]}, offsets relative to the payload start. An
// optional "__metadata__" object is accepted and ignored. Written headers are
// space-padded to a multiple of 8 bytes and payloads are laid out contiguously
// in name order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{numel, Tensor, TensorStore};
use crate::error::{Error, Result};
use crate::fsutil;

const METADATA_KEY: &str = "__metadata__";
// Refuse absurd header lengths before allocating.
const MAX_HEADER_LEN: u64 = 100 * 1024 * 1024;

#[derive(Debug, Serialize, Deserialize)]
struct EntryHeader {
    dtype: String,
    shape: Vec<usize>,
    data_offsets: [usize; 2],
}

pub fn load_store(path: impl AsRef<Path>) -> Result<TensorStore> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_store(&bytes)
}

pub fn save_store(store: &TensorStore, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_store(store)?;
    fsutil::write_atomic(path.as_ref(), &bytes)
}

pub fn encode_store(store: &TensorStore) -> Result<Vec<u8>> {
    let mut header = Map::new();
    let mut offset = 0usize;
    for (name, tensor) in store.iter() {
        let len = tensor.numel() * 4;
        let entry = EntryHeader {
            dtype: "F32".to_string(),
            shape: tensor.shape().to_vec(),
            data_offsets: [offset, offset + len],
        };
        header.insert(name.to_string(), serde_json::to_value(entry)?);
        offset += len;
    }
    let mut header_bytes = serde_json::to_vec(&Value::Object(header))?;
    while header_bytes.len() % 8 != 0 {
        header_bytes.push(b' ');
    }

    let mut out = Vec::with_capacity(8 + header_bytes.len() + offset);
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for (_, tensor) in store.iter() {
        for v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_store(bytes: &[u8]) -> Result<TensorStore> {
    if bytes.len() < 8 {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the 8-byte length prefix",
            bytes.len()
        )));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
    if header_len > MAX_HEADER_LEN || header_len > (bytes.len() - 8) as u64 {
        return Err(Error::Format(format!(
            "header length {header_len} exceeds file size {}",
            bytes.len()
        )));
    }
    let header_end = 8 + header_len as usize;
    let header: Map<String, Value> = serde_json::from_slice(&bytes[8..header_end])
        .map_err(|e| Error::Format(format!("header is not a JSON object: {e}")))?;
    let payload = &bytes[header_end..];

    let mut spans = Vec::with_capacity(header.len());
    let mut store = TensorStore::new();
    for (name, value) in header {
        if name == METADATA_KEY {
            continue;
        }
        let entry: EntryHeader = serde_json::from_value(value)
            .map_err(|e| Error::Format(format!("entry `{name}`: {e}")))?;
        if entry.dtype != "F32" {
            return Err(Error::Format(format!(
                "entry `{name}` has dtype {}, only F32 is supported",
                entry.dtype
            )));
        }
        let [begin, end] = entry.data_offsets;
        let corrupt = |reason: String| Error::Corruption {
            tensor: name.clone(),
            reason,
        };
        if begin > end || end > payload.len() {
            return Err(corrupt(format!(
                "data offsets [{begin}, {end}] fall outside the {}-byte payload",
                payload.len()
            )));
        }
        if entry.shape.contains(&0) {
            return Err(corrupt(format!(
                "shape {:?} has a zero dimension",
                entry.shape
            )));
        }
        let expected = numel(&entry.shape)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| corrupt(format!("shape {:?} overflows", entry.shape)))?;
        if end - begin != expected {
            return Err(corrupt(format!(
                "shape {:?} needs {} values but the payload span holds {} bytes",
                entry.shape,
                expected / 4,
                end - begin
            )));
        }
        let data: Vec<f32> = payload[begin..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        spans.push((begin, end, name.clone()));
        let tensor = Tensor::new(entry.shape, data).map_err(|e| corrupt(e.to_string()))?;
        store.insert(name, tensor)?;
    }

    spans.sort();
    for pair in spans.windows(2) {
        if pair[1].0 < pair[0].1 {
            return Err(Error::Corruption {
                tensor: pair[1].2.clone(),
                reason: format!("payload span overlaps tensor `{}`", pair[0].2),
            });
        }
    }
    Ok(store)
}
