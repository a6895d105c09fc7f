//! Binary checkpoint: 8-byte magic, little-endian `u64` header length, a
//! JSON header describing every tensor, then the tensor data as
//! little-endian `f64` in declaration order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::numkit::{Dense2, ParamSet};

const MAGIC: &[u8; 8] = b"CFRECKPT";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub seed: u64,
    pub config: ModelConfig,
    /// Digest of whatever configuration produced the weights.
    pub config_hash: String,
    pub tensors: Vec<TensorInfo>,
}

/// Hex SHA-256 of any serializable configuration.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_vec(config).expect("configs serialize");
    hex::encode(Sha256::digest(&json))
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, run_config_hash: &str) -> Result<()> {
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        seed: params.seed,
        config: params.config.clone(),
        config_hash: run_config_hash.to_string(),
        tensors: params
            .set
            .tensors()
            .iter()
            .enumerate()
            .map(|(id, t)| TensorInfo {
                name: params.set.name(id).to_string(),
                rows: t.rows(),
                cols: t.cols(),
            })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + header_bytes.len() + params.set.numel() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for t in params.set.tensors() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint. When `expected` is given, its shapes must match the
/// stored configuration.
pub fn load_checkpoint(
    path: &Path,
    expected: Option<&ModelConfig>,
) -> Result<(ModelParams, CheckpointHeader)> {
    let bad = |msg: String| Error::Checkpoint {
        path: path.to_path_buf(),
        msg,
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = 16usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| bad("truncated header".into()))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[16..body]).map_err(|e| bad(format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {}", header.format_version)));
    }
    if let Some(exp) = expected {
        if exp != &header.config {
            return Err(bad(format!(
                "shape mismatch: checkpoint has {:?}, configuration expects {:?}",
                header.config, exp
            )));
        }
    }
    let numel: usize = header.tensors.iter().map(|t| t.rows * t.cols).sum();
    if bytes.len() - body != numel * 8 {
        return Err(bad(format!(
            "expected {} bytes of tensor data, found {}",
            numel * 8,
            bytes.len() - body
        )));
    }
    let mut set = ParamSet::new();
    let mut offset = body;
    for info in &header.tensors {
        let n = info.rows * info.cols;
        let data = bytes[offset..offset + n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset += n * 8;
        set.push(info.name.clone(), Dense2::from_vec(info.rows, info.cols, data)?);
    }
    let params = ModelParams::from_parts(header.config.clone(), header.seed, set)
        .map_err(|e| bad(e.to_string()))?;
    Ok((params, header))
}
