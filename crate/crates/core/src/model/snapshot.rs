//! Self-describing weight snapshot container.
//!
//! Layout: 8-byte magic `SEMFLWTS`, u32 LE format version, u32 LE header
//! length, a JSON header (model tag, round, element dtype, tensor names and
//! shapes), then every tensor's elements as raw little-endian values in
//! header order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::weights::{ModelWeights, ParamTensor};
use crate::error::{Error, Result};
use crate::scalar::{DType, StorageScalar};

const MAGIC: &[u8; 8] = b"SEMFLWTS";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub model_tag: String,
    pub version: u64,
    pub dtype: DType,
    pub entries: Vec<EntryHeader>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryHeader {
    pub name: String,
    pub shape: Vec<usize>,
}

fn bad(detail: impl Into<String>) -> Error {
    Error::Format { what: "weight snapshot", detail: detail.into() }
}

pub fn encode_snapshot<S: StorageScalar>(w: &ModelWeights<S>) -> Vec<u8> {
    let header = SnapshotHeader {
        model_tag: w.model_tag.clone(),
        version: w.version,
        dtype: S::DTYPE,
        entries: w.entries.iter().map(|e| EntryHeader { name: e.name.clone(), shape: e.shape.clone() }).collect(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + header.len() + w.num_params() * S::DTYPE.size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for v in w.flat() {
        v.write_le(&mut out);
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).ok_or_else(|| bad("truncated preamble"))
}

/// Decode into `S`, converting from the stored element type if needed.
pub fn decode_snapshot<S: StorageScalar>(bytes: &[u8]) -> Result<ModelWeights<S>> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic"));
    }
    let version = read_u32(bytes, 8)?;
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let hlen = read_u32(bytes, 12)? as usize;
    let header: SnapshotHeader = serde_json::from_slice(bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?)?;
    let size = header.dtype.size();
    let mut at = 16 + hlen;
    let mut entries = Vec::with_capacity(header.entries.len());
    for e in header.entries {
        let n: usize = e.shape.iter().product();
        let raw = bytes.get(at..at + n * size).ok_or_else(|| bad(format!("truncated data for `{}`", e.name)))?;
        at += n * size;
        let data = raw
            .chunks_exact(size)
            .map(|c| match header.dtype {
                DType::F32 => S::lit(f64::from(f32::from_le(c))),
                DType::F64 => S::lit(f64::from_le(c)),
            })
            .collect();
        entries.push(ParamTensor { name: e.name, shape: e.shape, data });
    }
    if at != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - at)));
    }
    Ok(ModelWeights { model_tag: header.model_tag, version: header.version, entries })
}

pub fn write_snapshot<S: StorageScalar>(path: &Path, w: &ModelWeights<S>) -> Result<String> {
    let bytes = encode_snapshot(w);
    std::fs::write(path, &bytes)?;
    Ok(snapshot_digest(&bytes))
}

pub fn read_snapshot<S: StorageScalar>(path: &Path) -> Result<ModelWeights<S>> {
    decode_snapshot(&std::fs::read(path)?)
}

/// Hex SHA-256 of encoded snapshot bytes.
pub fn snapshot_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the encoded snapshot of `w`.
pub fn weights_digest<S: StorageScalar>(w: &ModelWeights<S>) -> String {
    snapshot_digest(&encode_snapshot(w))
}
