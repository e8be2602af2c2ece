use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, TensorSpec, Transformer};
use crate::vocab::vocab_hash;

/// File magic for transformer checkpoints.
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TFMODEL1";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    vocab_hash: String,
    tensors: Vec<TensorSpec>,
}

/// Layout: magic, u32 LE header length, JSON header, then every parameter
/// as f64 little-endian in layout order.
pub fn save_checkpoint(model: &Transformer, path: &Path) -> Result<(), ModelError> {
    let header = Header {
        version: VERSION,
        config: model.config().clone(),
        vocab_hash: vocab_hash().to_string(),
        tensors: model.layout().specs.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * model.n_params());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(&out)?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Transformer, ModelError> {
    checkpoint_from_bytes(&std::fs::read(path)?)
}

pub(crate) fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Transformer, ModelError> {
    let bad = |m: &str| ModelError::Checkpoint(m.to_string());
    if !bytes.starts_with(CHECKPOINT_MAGIC) {
        return Err(bad("missing magic"));
    }
    let rest = &bytes[8..];
    if rest.len() < 4 {
        return Err(bad("truncated header"));
    }
    let hlen = u32::from_le_bytes([rest[0], rest[1], rest[2], rest[3]]) as usize;
    let rest = &rest[4..];
    if rest.len() < hlen {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&rest[..hlen]).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if header.version != VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {}", header.version)));
    }
    if header.vocab_hash != vocab_hash() {
        return Err(ModelError::VocabMismatch { expected: vocab_hash().to_string(), found: header.vocab_hash });
    }
    let body = &rest[hlen..];
    if body.len() % 8 != 0 {
        return Err(bad("parameter block is not a whole number of f64 values"));
    }
    let params: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let model = Transformer::from_params(&header.config, params)?;
    if model.layout().specs != header.tensors {
        return Err(bad("tensor table does not match the configuration"));
    }
    Ok(model)
}
