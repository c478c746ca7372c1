//! `SERM` checkpoint files.
//!
//! Layout, little-endian: magic `SERM` | u32 version | u32 config length |
//! canonical config JSON | parameters as f32 in layout order | u32 CRC32 of
//! every preceding byte.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::config::ModelConfig;
use super::params::{ModelParams, ParamLayout};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SERM";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let json = params.config().canonical_json();
    let mut out = Vec::with_capacity(16 + json.len() + params.values().len() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.write_u32::<LittleEndian>(CHECKPOINT_VERSION).unwrap();
    out.write_u32::<LittleEndian>(json.len() as u32).unwrap();
    out.extend_from_slice(json.as_bytes());
    for &v in params.values() {
        out.write_f32::<LittleEndian>(v as f32).unwrap();
    }
    let crc = crc32fast::hash(&out);
    out.write_u32::<LittleEndian>(crc).unwrap();
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    if bytes.len() < 16 {
        return Err(Error::format(bytes.len() as u64, "checkpoint too short"));
    }
    let body_len = bytes.len() - 4;
    let stored_crc = u32::from_le_bytes(bytes[body_len..].try_into().expect("4 bytes"));
    let mut cur = Cursor::new(&bytes[..body_len]);
    let truncated = |cur: &Cursor<&[u8]>| Error::format(cur.position(), "truncated checkpoint");

    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic).map_err(|_| truncated(&cur))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::format(0, "bad magic, expected SERM"));
    }
    let version = cur.read_u32::<LittleEndian>().map_err(|_| truncated(&cur))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
    }
    let json_len = cur.read_u32::<LittleEndian>().map_err(|_| truncated(&cur))? as usize;
    let mut json = vec![0u8; json_len];
    cur.read_exact(&mut json).map_err(|_| truncated(&cur))?;
    let config: ModelConfig = serde_json::from_slice(&json)
        .map_err(|e| Error::format(12, format!("invalid config JSON: {e}")))?;
    config
        .validate()
        .map_err(|e| Error::format(12, e.to_string()))?;

    let n = ParamLayout::new(&config).len();
    let payload_start = cur.position() as usize;
    if body_len - payload_start != n * 4 {
        return Err(Error::format(
            payload_start as u64,
            format!(
                "expected {} parameter bytes for this config, found {}",
                n * 4,
                body_len - payload_start
            ),
        ));
    }
    if crc32fast::hash(&bytes[..body_len]) != stored_crc {
        return Err(Error::format(body_len as u64, "CRC mismatch"));
    }
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let pos = cur.position();
        let v = cur.read_f32::<LittleEndian>().map_err(|_| truncated(&cur))?;
        if !v.is_finite() {
            return Err(Error::format(pos, "non-finite parameter"));
        }
        values.push(v as f64);
    }
    Ok(ModelParams::from_parts(config, values))
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Loads a checkpoint and requires its configuration hash to equal
/// `expected`'s.
pub fn load_checkpoint_for(path: &Path, expected: &ModelConfig) -> Result<ModelParams> {
    let params = load_checkpoint(path)?;
    if params.config().hash() != expected.hash() {
        return Err(Error::schema(format!(
            "{}: checkpoint config {} does not match expected {}",
            path.display(),
            params.config().canonical_json(),
            expected.canonical_json()
        )));
    }
    Ok(params)
}
