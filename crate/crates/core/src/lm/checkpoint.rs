//! Checkpoint file: magic, format version, JSON header (config and
//! vocabulary), then the parameters as little-endian f64.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::Transformer;
use super::LmConfig;
use crate::error::{Error, Result};
use crate::vocab::Vocab;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"TODLMCK\n";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: LmConfig,
    vocab: Vocab,
}

pub fn checkpoint_bytes(model: &Transformer, vocab: &Vocab) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        config: model.config().clone(),
        vocab: vocab.clone(),
    })?;
    let params = model.params();
    let mut out = Vec::with_capacity(32 + header.len() + params.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if buf.len() < n {
        return Err(Error::Checkpoint("truncated file".into()));
    }
    let (head, rest) = buf.split_at(n);
    *buf = rest;
    Ok(head)
}

fn take_u64(buf: &mut &[u8]) -> Result<u64> {
    Ok(u64::from_le_bytes(take(buf, 8)?.try_into().expect("8 bytes")))
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(Transformer, Vocab)> {
    let mut buf = bytes;
    if take(&mut buf, 8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(take(&mut buf, 4)?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let hlen = take_u64(&mut buf)? as usize;
    let header: Header = serde_json::from_slice(take(&mut buf, hlen)?)?;
    if header.config.vocab_size != header.vocab.len() {
        return Err(Error::Checkpoint(format!(
            "config vocab size {} but {} vocabulary entries",
            header.config.vocab_size,
            header.vocab.len()
        )));
    }
    let n = take_u64(&mut buf)? as usize;
    let raw = take(&mut buf, n.checked_mul(8).ok_or_else(|| Error::Checkpoint("bad size".into()))?)?;
    if !buf.is_empty() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    let params = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let model = Transformer::from_params(header.config, params).map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok((model, header.vocab))
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &Transformer, vocab: &Vocab) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_bytes(model, vocab)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Transformer, Vocab)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}
