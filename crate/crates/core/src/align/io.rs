//! `EMB1` and `TEMB` embedding interchange files.
//!
//! `EMB1`: magic | u32 D | u32 N | f64 frame_period_ms | f64 start_offset_ms |
//! N·D f32 row-major.
//! `TEMB`: magic | u32 D | u32 N | N × (u32 start_ms | u32 end_ms | D f32).
//! All little-endian.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use super::{EmbeddingFrames, TimedEmbedding};
use crate::error::{Error, Result};

pub const FRAMES_MAGIC: &[u8; 4] = b"EMB1";
pub const TIMED_MAGIC: &[u8; 4] = b"TEMB";

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingFile {
    Frames(EmbeddingFrames),
    Timed { dim: usize, items: Vec<TimedEmbedding> },
}

impl EmbeddingFile {
    pub fn dim(&self) -> usize {
        match self {
            EmbeddingFile::Frames(f) => f.dim(),
            EmbeddingFile::Timed { dim, .. } => *dim,
        }
    }
}

struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
}

impl<'a> Reader<'a> {
    fn pos(&self) -> u64 {
        self.cur.position()
    }

    fn remaining(&self) -> usize {
        self.cur.get_ref().len() - self.cur.position() as usize
    }

    fn truncated(&self) -> Error {
        Error::format(self.pos(), "truncated embedding file")
    }

    fn u32(&mut self) -> Result<u32> {
        self.cur.read_u32::<LittleEndian>().map_err(|_| self.truncated())
    }

    fn f64(&mut self) -> Result<f64> {
        self.cur.read_f64::<LittleEndian>().map_err(|_| self.truncated())
    }

    fn finite_f32(&mut self) -> Result<f64> {
        let pos = self.pos();
        let v = self.cur.read_f32::<LittleEndian>().map_err(|_| self.truncated())?;
        if v.is_finite() {
            Ok(v as f64)
        } else {
            Err(Error::format(pos, "non-finite embedding value"))
        }
    }

    fn need(&self, bytes: Option<usize>) -> Result<()> {
        match bytes {
            Some(b) if b <= self.remaining() => Ok(()),
            _ => Err(Error::format(self.pos(), "truncated embedding payload")),
        }
    }
}

pub fn decode_embedding_file(bytes: &[u8]) -> Result<EmbeddingFile> {
    let mut r = Reader {
        cur: Cursor::new(bytes),
    };
    let mut magic = [0u8; 4];
    r.cur.read_exact(&mut magic).map_err(|_| r.truncated())?;
    let dim = r.u32()? as usize;
    let n = r.u32()? as usize;
    if dim == 0 {
        return Err(Error::format(4, "embedding dimension is zero"));
    }
    let file = match &magic {
        FRAMES_MAGIC => {
            let period_pos = r.pos();
            let period = r.f64()?;
            let offset = r.f64()?;
            if !(period > 0.0 && period.is_finite()) || !offset.is_finite() {
                return Err(Error::format(period_pos, "invalid frame period or offset"));
            }
            if n == 0 {
                return Err(Error::format(8, "EMB1 file has no frames"));
            }
            r.need(n.checked_mul(dim).and_then(|c| c.checked_mul(4)))?;
            let mut values = Vec::with_capacity(n * dim);
            for _ in 0..n * dim {
                values.push(r.finite_f32()?);
            }
            let vectors = Array2::from_shape_vec((n, dim), values).expect("length checked");
            EmbeddingFile::Frames(EmbeddingFrames {
                vectors,
                frame_period_ms: period,
                start_offset_ms: offset,
            })
        }
        TIMED_MAGIC => {
            r.need(dim.checked_add(2).and_then(|c| c.checked_mul(4)).and_then(|c| c.checked_mul(n)))?;
            let mut items = Vec::with_capacity(n);
            for k in 0..n {
                let span_pos = r.pos();
                let start_ms = r.u32()? as u64;
                let end_ms = r.u32()? as u64;
                if end_ms <= start_ms {
                    return Err(Error::format(span_pos, format!("item {k}: end {end_ms} <= start {start_ms}")));
                }
                let vector = (0..dim).map(|_| r.finite_f32()).collect::<Result<Vec<_>>>()?;
                items.push(TimedEmbedding {
                    vector,
                    start_ms,
                    end_ms,
                });
            }
            EmbeddingFile::Timed { dim, items }
        }
        other => {
            return Err(Error::format(
                0,
                format!("unknown magic {:?}", String::from_utf8_lossy(other)),
            ))
        }
    };
    if r.remaining() != 0 {
        return Err(Error::format(r.pos(), "trailing bytes after payload"));
    }
    Ok(file)
}

pub fn read_embedding_file(path: &Path) -> Result<EmbeddingFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embedding_file(&bytes)
}

pub fn encode_emb1(frames: &EmbeddingFrames) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + frames.vectors.len() * 4);
    out.extend_from_slice(FRAMES_MAGIC);
    out.write_u32::<LittleEndian>(frames.dim() as u32).unwrap();
    out.write_u32::<LittleEndian>(frames.vectors.nrows() as u32).unwrap();
    out.write_f64::<LittleEndian>(frames.frame_period_ms).unwrap();
    out.write_f64::<LittleEndian>(frames.start_offset_ms).unwrap();
    for &v in frames.vectors.iter() {
        out.write_f32::<LittleEndian>(v as f32).unwrap();
    }
    out
}

pub fn encode_temb(dim: usize, items: &[TimedEmbedding]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + items.len() * (8 + dim * 4));
    out.extend_from_slice(TIMED_MAGIC);
    out.write_u32::<LittleEndian>(dim as u32).unwrap();
    out.write_u32::<LittleEndian>(items.len() as u32).unwrap();
    for (k, item) in items.iter().enumerate() {
        if item.vector.len() != dim {
            return Err(Error::schema(format!("item {k} has D={}, expected {dim}", item.vector.len())));
        }
        let span = |v: u64| u32::try_from(v).map_err(|_| Error::invalid(format!("item {k}: time overflows u32")));
        out.write_u32::<LittleEndian>(span(item.start_ms)?).unwrap();
        out.write_u32::<LittleEndian>(span(item.end_ms)?).unwrap();
        for &v in &item.vector {
            out.write_f32::<LittleEndian>(v as f32).unwrap();
        }
    }
    Ok(out)
}

pub fn write_emb1(path: &Path, frames: &EmbeddingFrames) -> Result<()> {
    std::fs::write(path, encode_emb1(frames)).map_err(|e| Error::io(path, e))
}

pub fn write_temb(path: &Path, dim: usize, items: &[TimedEmbedding]) -> Result<()> {
    let bytes = encode_temb(dim, items)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn emb1_shape() {
        let frames = EmbeddingFrames::new(Array2::from_elem((100, 512), 0.5), 20.0, 0.0).unwrap();
        match decode_embedding_file(&encode_emb1(&frames)).unwrap() {
            EmbeddingFile::Frames(f) => assert_eq!(f.vectors.dim(), (100, 512)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn temb_accepts_shared_spans_and_empty_files() {
        let items: Vec<_> = (0..3)
            .map(|k| TimedEmbedding {
                vector: vec![k as f64; 4],
                start_ms: 100,
                end_ms: 300,
            })
            .collect();
        let file = decode_embedding_file(&encode_temb(4, &items).unwrap()).unwrap();
        assert_eq!(file, EmbeddingFile::Timed { dim: 4, items });
        let empty = decode_embedding_file(&encode_temb(768, &[]).unwrap()).unwrap();
        assert_eq!(empty.dim(), 768);
    }

    #[test]
    fn malformed_files() {
        let mut bytes = encode_temb(1, &[]).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_embedding_file(&bytes), Err(Error::Format { offset: 0, .. })));

        let frames = EmbeddingFrames::new(Array2::from_elem((3, 2), 1.0), 10.0, 0.0).unwrap();
        let bytes = encode_emb1(&frames);
        assert!(matches!(
            decode_embedding_file(&bytes[..bytes.len() - 2]),
            Err(Error::Format { offset: 28, .. })
        ));
        let mut nan = bytes.clone();
        nan[32..36].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_embedding_file(&nan), Err(Error::Format { offset: 32, .. })));
    }

    proptest! {
        #[test]
        fn emb1_round_trip(n in 1usize..20, dim in 1usize..8, period in 1.0f64..50.0, raw in any::<u64>()) {
            let vectors = Array2::from_shape_fn((n, dim), |(i, j)| {
                f32::from_bits(((raw as u32) ^ (i * 31 + j) as u32) & 0x3fff_ffff) as f64
            });
            let frames = EmbeddingFrames::new(vectors, period, 5.0).unwrap();
            let bytes = encode_emb1(&frames);
            prop_assert_eq!(decode_embedding_file(&bytes).unwrap(), EmbeddingFile::Frames(frames));
        }

        #[test]
        fn temb_round_trip(spans in prop::collection::vec((0u32..100_000, 1u32..5000, -1.0f32..1.0), 0..20)) {
            let items: Vec<_> = spans
                .iter()
                .map(|&(s, d, v)| TimedEmbedding { vector: vec![v as f64, -v as f64], start_ms: s as u64, end_ms: (s + d) as u64 })
                .collect();
            let bytes = encode_temb(2, &items).unwrap();
            prop_assert_eq!(decode_embedding_file(&bytes).unwrap(), EmbeddingFile::Timed { dim: 2, items });
        }
    }
}
