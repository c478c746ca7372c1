//! `FEA1` feature cache files.
//!
//! Layout, little-endian: magic `FEA1` | u32 D | u32 T | f64 segment_ms |
//! T·D f32 row-major | u16 name length | UTF-8 feature-set name.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::data::{FeatureMatrix, SegmentTimeline};
use crate::error::{Error, Result};

pub const FEATURE_CACHE_MAGIC: &[u8; 4] = b"FEA1";

pub fn encode_feature_cache(fm: &FeatureMatrix) -> Result<Vec<u8>> {
    let name = fm.feature_set.as_bytes();
    let name_len = u16::try_from(name.len())
        .map_err(|_| Error::invalid("feature-set name longer than 65535 bytes"))?;
    let mut out = Vec::with_capacity(24 + fm.rows.len() * 4 + name.len());
    out.extend_from_slice(FEATURE_CACHE_MAGIC);
    out.write_u32::<LittleEndian>(fm.dim() as u32).unwrap();
    out.write_u32::<LittleEndian>(fm.len() as u32).unwrap();
    out.write_f64::<LittleEndian>(fm.timeline.segment_ms as f64).unwrap();
    for &v in fm.rows.iter() {
        out.write_f32::<LittleEndian>(v as f32).unwrap();
    }
    out.write_u16::<LittleEndian>(name_len).unwrap();
    out.extend_from_slice(name);
    Ok(out)
}

pub fn decode_feature_cache(bytes: &[u8], conversation_id: &str) -> Result<FeatureMatrix> {
    let mut cur = Cursor::new(bytes);
    let truncated = |cur: &Cursor<&[u8]>| Error::format(cur.position(), "truncated feature cache");
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic).map_err(|_| truncated(&cur))?;
    if &magic != FEATURE_CACHE_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}, expected FEA1")));
    }
    let dim = cur.read_u32::<LittleEndian>().map_err(|_| truncated(&cur))? as usize;
    let len = cur.read_u32::<LittleEndian>().map_err(|_| truncated(&cur))? as usize;
    let seg_pos = cur.position();
    let segment_ms = cur.read_f64::<LittleEndian>().map_err(|_| truncated(&cur))?;
    if !(segment_ms >= 1.0 && segment_ms.fract() == 0.0) {
        return Err(Error::format(seg_pos, format!("invalid segment length {segment_ms}")));
    }
    let payload = dim
        .checked_mul(len)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(4, "dimensions overflow"))?;
    if bytes.len().saturating_sub(cur.position() as usize) < payload {
        return Err(Error::format(cur.position(), "truncated feature payload"));
    }
    let mut values = Vec::with_capacity(dim * len);
    for _ in 0..dim * len {
        let pos = cur.position();
        let v = cur.read_f32::<LittleEndian>().map_err(|_| truncated(&cur))?;
        if !v.is_finite() {
            return Err(Error::format(pos, "non-finite feature value"));
        }
        values.push(v as f64);
    }
    let name_len = cur.read_u16::<LittleEndian>().map_err(|_| truncated(&cur))? as usize;
    let name_pos = cur.position();
    let mut name = vec![0u8; name_len];
    cur.read_exact(&mut name).map_err(|_| truncated(&cur))?;
    let feature_set =
        String::from_utf8(name).map_err(|_| Error::format(name_pos, "feature-set name is not UTF-8"))?;
    if cur.position() as usize != bytes.len() {
        return Err(Error::format(cur.position(), "trailing bytes after feature-set name"));
    }
    let timeline = SegmentTimeline::new(conversation_id, segment_ms as u64, len)
        .map_err(|e| Error::format(8, e.to_string()))?;
    let rows = Array2::from_shape_vec((len, dim), values).expect("length checked");
    FeatureMatrix::new(feature_set, rows, timeline).map_err(|e| Error::format(4, e.to_string()))
}

pub fn write_feature_cache(path: &Path, fm: &FeatureMatrix) -> Result<()> {
    let bytes = encode_feature_cache(fm)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_feature_cache(path: &Path, conversation_id: &str) -> Result<FeatureMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_feature_cache(&bytes, conversation_id)
}
