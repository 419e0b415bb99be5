//! Single-file checkpoint: magic, little-endian header length, JSON header
//! (format tag, config echo, tensor table, metadata), then raw `f32le` data
//! in tensor-table order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Mminr, ModelConfig};
use crate::error::{Error, Result};
use crate::nn::Params;
use crate::tensor::{Scalar, Tensor};

const MAGIC: &[u8; 8] = b"MMINRCKP";
pub const CHECKPOINT_FORMAT: &str = "mminr-checkpoint/1";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: Option<usize>,
    pub val_loss: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    config: ModelConfig,
    #[serde(default)]
    meta: CheckpointMeta,
    dtype: String,
    tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint<T: Scalar>(model: &Mminr<T>, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let params = model.named_params();
    let header = Header {
        format: CHECKPOINT_FORMAT.to_string(),
        config: model.config().clone(),
        meta: meta.clone(),
        dtype: "f32le".to_string(),
        tensors: params
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header)?;
    let payload_len: usize = params.iter().map(|(_, t)| t.len() * 4).sum();
    let mut buf = Vec::with_capacity(16 + header.len() + payload_len);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    for (_, t) in &params {
        for &v in t.data() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Mminr<f32>, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body)?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(bad(&format!("unsupported format tag {:?}", header.format)));
    }
    if header.dtype != "f32le" {
        return Err(bad(&format!("unsupported dtype {:?}", header.dtype)));
    }
    let mut model = Mminr::<f32>::zeros(header.config)?;
    let mut slots = model.named_params_mut();
    if slots.len() != header.tensors.len() {
        return Err(bad("tensor table does not match the configured architecture"));
    }
    let mut offset = 16 + hlen;
    for ((name, slot), entry) in slots.iter_mut().zip(&header.tensors) {
        if *name != entry.name || slot.shape() != entry.shape.as_slice() {
            return Err(bad(&format!("unexpected tensor {} {:?}", entry.name, entry.shape)));
        }
        let n = slot.len();
        let raw = bytes
            .get(offset..offset + 4 * n)
            .ok_or_else(|| bad("truncated payload"))?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(bad(&format!("non-finite value in {name}")));
        }
        **slot = Tensor::from_vec(&entry.shape, data);
        offset += 4 * n;
    }
    if offset != bytes.len() {
        return Err(bad("trailing bytes after payload"));
    }
    Ok((model, header.meta))
}
