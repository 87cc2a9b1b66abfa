//! Checkpoint file layout:
//!
//! ```text
//! u64 LE   header length in bytes
//! header   JSON {"format": "vecprobe-lm", "version": 1, "config": {..}, "vocab": [..]}
//! tensors  little-endian f32, in `Layout::tensors` order, row-major
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::model::{Layout, TransformerLM};
use super::tokenizer::Tokenizer;
use crate::error::{Error, Result};

pub const FORMAT: &str = "vecprobe-lm";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: ModelConfig,
    vocab: Vec<String>,
}

pub fn to_bytes(model: &TransformerLM) -> Vec<u8> {
    let header = Header {
        format: FORMAT.to_string(),
        version: VERSION,
        config: *model.config(),
        vocab: model.tokenizer().words().to_vec(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + json.len() + 4 * model.num_params());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<TransformerLM> {
    let bad = |msg: String| Error::Checkpoint(msg);
    if bytes.len() < 8 {
        return Err(bad("truncated header length".into()));
    }
    let hlen = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
    let hlen = usize::try_from(hlen).map_err(|_| bad("header length overflows".into()))?;
    let body = &bytes[8..];
    if body.len() < hlen {
        return Err(bad(format!("truncated header: need {hlen} bytes, have {}", body.len())));
    }
    let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| bad(format!("invalid header: {e}")))?;
    if header.format != FORMAT {
        return Err(bad(format!("unknown format {:?}", header.format)));
    }
    if header.version != VERSION {
        return Err(bad(format!(
            "version mismatch: file has {}, expected {VERSION}",
            header.version
        )));
    }
    header.config.validate()?;
    let tokenizer = Tokenizer::from_full_vocab(header.vocab)?;
    let expected = Layout::new(&header.config).total();
    let payload = &body[hlen..];
    if payload.len() != expected * 4 {
        return Err(bad(format!(
            "payload is {} bytes, expected {} for {expected} parameters",
            payload.len(),
            expected * 4
        )));
    }
    let params = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    TransformerLM::from_parts(header.config, tokenizer, params)
}

pub fn save_checkpoint(model: &TransformerLM, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(format!("writing checkpoint {}", path.display()), e))
}

pub fn load_checkpoint(path: &Path) -> Result<TransformerLM> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading checkpoint {}", path.display()), e))?;
    from_bytes(&bytes)
}
