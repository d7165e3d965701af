//! Weight file format.
//!
//! ```text
//! "CDNW" | version: u32 LE | header_len: u32 LE | header: UTF-8 JSON | payload
//! ```
//!
//! The payload holds, for each layer in order, its weights in
//! `(out, in, kh, kw)` order followed by its biases, all as little-endian
//! `f32`. The header carries the architecture, metadata, per-layer byte
//! offsets into the payload and the payload's CRC32.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArchitectureSpec, Metadata, NetworkKind, NetworkWeights};
use crate::error::{Error, Result};
use crate::tensor::{ConvLayer, Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"CDNW";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    architecture: ArchitectureSpec,
    metadata: Metadata,
    layers: Vec<LayerEntry>,
    payload_bytes: u64,
    payload_crc32: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerEntry {
    shape: [usize; 4],
    weights_offset: u64,
    bias_offset: u64,
    bias_len: usize,
}

fn format_err(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Format {
        field,
        reason: reason.into(),
    }
}

pub(crate) fn to_bytes(w: &NetworkWeights) -> Result<Vec<u8>> {
    let mut payload = Vec::with_capacity(w.param_count() * 4);
    let mut entries = Vec::with_capacity(w.layers.len());
    for layer in &w.layers {
        let s = layer.weights().shape();
        let weights_offset = payload.len() as u64;
        for v in layer.weights().data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        let bias_offset = payload.len() as u64;
        for v in layer.bias() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(LayerEntry {
            shape: [s.n, s.c, s.h, s.w],
            weights_offset,
            bias_offset,
            bias_len: layer.bias().len(),
        });
    }
    let header = Header {
        architecture: w.architecture.clone(),
        metadata: w.metadata.clone(),
        layers: entries,
        payload_bytes: payload.len() as u64,
        payload_crc32: crc32fast::hash(&payload),
    };
    let json = serde_json::to_vec(&header).map_err(|e| format_err("header", e.to_string()))?;
    let mut out = Vec::with_capacity(12 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize, field: &'static str) -> Result<u32> {
    let raw = bytes
        .get(at..at + 4)
        .ok_or_else(|| format_err(field, "file truncated"))?;
    Ok(u32::from_le_bytes(raw.try_into().expect("4 bytes")))
}

fn read_f32s(payload: &[u8], offset: u64, count: usize) -> Result<Vec<f32>> {
    let start = usize::try_from(offset).map_err(|_| format_err("layers", "offset overflow"))?;
    let end = start
        .checked_add(count * 4)
        .ok_or_else(|| format_err("layers", "offset overflow"))?;
    let raw = payload
        .get(start..end)
        .ok_or_else(|| format_err("layers", "layer data outside payload"))?;
    Ok(raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

pub(crate) fn from_bytes(bytes: &[u8]) -> Result<NetworkWeights> {
    let magic = bytes.get(..4).ok_or_else(|| format_err("magic", "file truncated"))?;
    if magic != MAGIC {
        return Err(format_err("magic", format!("expected CDNW, found {magic:?}")));
    }
    let version = read_u32(bytes, 4, "version")?;
    if version != FORMAT_VERSION {
        return Err(format_err(
            "version",
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let header_len = read_u32(bytes, 8, "header_length")? as usize;
    let header_end = 12usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| format_err("header_length", "header extends past end of file"))?;
    let header: Header = serde_json::from_slice(&bytes[12..header_end])
        .map_err(|e| format_err("header", e.to_string()))?;
    let payload = &bytes[header_end..];
    if payload.len() as u64 != header.payload_bytes {
        return Err(format_err(
            "payload_bytes",
            format!(
                "header declares {} payload bytes, file has {}",
                header.payload_bytes,
                payload.len()
            ),
        ));
    }
    let crc = crc32fast::hash(payload);
    if crc != header.payload_crc32 {
        return Err(format_err(
            "payload_crc32",
            format!(
                "checksum mismatch: header {:08x}, payload {crc:08x}",
                header.payload_crc32
            ),
        ));
    }
    let arch = header.architecture;
    arch.validate()
        .map_err(|e| format_err("architecture", e.to_string()))?;
    if header.layers.len() != arch.layers.len() {
        return Err(format_err("layers", "layer count differs from architecture"));
    }
    let mut layers = Vec::with_capacity(header.layers.len());
    for (entry, spec) in header.layers.iter().zip(&arch.layers) {
        let expected = [spec.out_channels, spec.in_channels, 3, 3];
        if entry.shape != expected || entry.bias_len != spec.out_channels {
            return Err(format_err(
                "layers",
                format!("layer shape {:?} does not match architecture {expected:?}", entry.shape),
            ));
        }
        let shape = Shape::new(expected[0], expected[1], expected[2], expected[3]);
        let weights = read_f32s(payload, entry.weights_offset, shape.len())?;
        let bias = read_f32s(payload, entry.bias_offset, entry.bias_len)?;
        let weights = Tensor::new(shape, weights).map_err(|e| format_err("layers", e.to_string()))?;
        layers.push(
            ConvLayer::new(weights, bias, spec.dilation)
                .map_err(|e| format_err("layers", e.to_string()))?,
        );
    }
    NetworkWeights::from_layers(arch, layers, header.metadata)
}

pub fn save_weights(w: &NetworkWeights, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_bytes(w)?)?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<NetworkWeights> {
    from_bytes(&std::fs::read(path)?)
}

/// Loads weights and checks they belong to a network of `kind`.
pub fn load_weights_as(path: impl AsRef<Path>, kind: NetworkKind) -> Result<NetworkWeights> {
    let w = load_weights(path)?;
    w.expect_kind(kind)?;
    Ok(w)
}

impl NetworkWeights {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        to_bytes(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        from_bytes(bytes)
    }
}
