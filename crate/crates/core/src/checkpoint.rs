//! Task-boundary checkpoints: a self-describing binary container holding the
//! resolved config and the full run state (learner, record, progress).
//!
//! Layout: 8-byte magic, u32 little-endian format version, u64 payload
//! length, bincode payload, 32-byte SHA-256 of the payload. Floats travel as
//! their IEEE-754 bytes, so save/load is bit-exact.
//!
//! Random streams are derived on demand from `(master seed, label, ids)` —
//! see [`crate::rng`] — so a task boundary needs no generator positions; the
//! master seed inside the record pins all future randomness. That is also why
//! resume points are task boundaries only: mid-task stream positions are
//! never saved.

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::runner::RunState;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

const MAGIC: &[u8; 8] = b"CRLCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub state: RunState,
}

pub fn to_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let payload = bincode::serialize(ckpt)
        .map_err(|e| Error::Checkpoint(format!("serialize: {e}")))?;
    let mut out = Vec::with_capacity(payload.len() + 52);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&Sha256::digest(&payload));
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 8 + 4 + 8 + 32 {
        return Err(Error::Checkpoint("file too short to be a checkpoint".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("bad magic: not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = &bytes[20..];
    if body.len() != len + 32 {
        return Err(Error::Checkpoint(format!(
            "payload length mismatch: header says {len}, file holds {}",
            body.len().saturating_sub(32)
        )));
    }
    let (payload, digest) = body.split_at(len);
    if Sha256::digest(payload).as_slice() != digest {
        return Err(Error::Checkpoint("checksum mismatch: file is corrupt".into()));
    }
    bincode::deserialize(payload).map_err(|e| Error::Checkpoint(format!("deserialize: {e}")))
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, to_bytes(ckpt)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    from_bytes(&std::fs::read(path)?)
}
