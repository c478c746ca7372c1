//! Mapping of pre-trained embeddings onto the emotional-segment grid.
//!
//! Timed (word or sub-word) embeddings follow three rules: every item is
//! kept, an item spanning several segments is copied into each of them, and
//! items sharing a segment are averaged. Overlap is half-open, so an item
//! ending exactly on a boundary does not reach the next segment. A segment
//! no item overlaps gets a zero row.

mod io;

pub use io::{
    decode_embedding_file, encode_emb1, encode_temb, read_embedding_file, write_emb1, write_temb, EmbeddingFile,
    FRAMES_MAGIC, TIMED_MAGIC,
};

use ndarray::Array2;

use crate::data::{FeatureMatrix, SegmentTimeline};
use crate::error::{Error, Result};
use crate::pool::{pool_segments, Pooling};

/// An embedding vector attached to a `[start_ms, end_ms)` span.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedEmbedding {
    pub vector: Vec<f64>,
    pub start_ms: u64,
    pub end_ms: u64,
}

/// Regularly spaced frame embeddings; frame `i` starts at
/// `start_offset_ms + i·frame_period_ms`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFrames {
    pub vectors: Array2<f64>,
    pub frame_period_ms: f64,
    pub start_offset_ms: f64,
}

impl EmbeddingFrames {
    pub fn new(vectors: Array2<f64>, frame_period_ms: f64, start_offset_ms: f64) -> Result<Self> {
        if vectors.nrows() == 0 || vectors.ncols() == 0 {
            return Err(Error::invalid("embedding frames need N >= 1 and D >= 1"));
        }
        if !(frame_period_ms > 0.0 && frame_period_ms.is_finite()) || !start_offset_ms.is_finite() {
            return Err(Error::invalid("frame period must be positive and offset finite"));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding frames contain non-finite values"));
        }
        Ok(Self {
            vectors,
            frame_period_ms,
            start_offset_ms,
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn frame_start_ms(&self, i: usize) -> f64 {
        self.start_offset_ms + i as f64 * self.frame_period_ms
    }
}

/// Aligns `dim`-dimensional timed embeddings to `timeline`.
pub fn align_timed_embeddings(
    items: &[TimedEmbedding],
    dim: usize,
    timeline: &SegmentTimeline,
    feature_set: &str,
) -> Result<FeatureMatrix> {
    let n = timeline.n_segments;
    let seg = timeline.segment_ms;
    let mut sums = Array2::<f64>::zeros((n, dim));
    let mut counts = vec![0usize; n];
    for (k, item) in items.iter().enumerate() {
        if item.vector.len() != dim {
            return Err(Error::schema(format!(
                "embedding {k} has D={}, expected {dim}",
                item.vector.len()
            )));
        }
        if item.end_ms <= item.start_ms {
            return Err(Error::invalid(format!("embedding {k} has an empty span")));
        }
        let first = (item.start_ms / seg) as usize;
        if first >= n {
            continue;
        }
        let last = (((item.end_ms - 1) / seg) as usize).min(n - 1);
        for t in first..=last {
            counts[t] += 1;
            for (acc, v) in sums.row_mut(t).iter_mut().zip(&item.vector) {
                *acc += v;
            }
        }
    }
    for (mut row, &c) in sums.rows_mut().into_iter().zip(&counts) {
        if c > 1 {
            row /= c as f64;
        }
    }
    FeatureMatrix::new(feature_set, sums, timeline.clone())
}

/// Mean of the frames starting inside each segment; an empty segment
/// repeats the previous one.
pub fn average_frames_to_segments(
    frames: &EmbeddingFrames,
    timeline: &SegmentTimeline,
    feature_set: &str,
) -> Result<FeatureMatrix> {
    let rows = pool_segments(frames.vectors.view(), timeline.n_segments, Pooling::Mean, |i| {
        timeline.segment_of_ms(frames.frame_start_ms(i))
    })?;
    FeatureMatrix::new(feature_set, rows, timeline.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn item(v: &[f64], start_ms: u64, end_ms: u64) -> TimedEmbedding {
        TimedEmbedding {
            vector: v.to_vec(),
            start_ms,
            end_ms,
        }
    }

    fn timeline(n: usize) -> SegmentTimeline {
        SegmentTimeline::new("c", 250, n).unwrap()
    }

    #[test]
    fn spanning_word_is_duplicated() {
        let fm = align_timed_embeddings(&[item(&[1.0, -2.0], 500, 1250)], 2, &timeline(6), "w").unwrap();
        for t in 2..=4 {
            assert_eq!(fm.rows.row(t).to_vec(), vec![1.0, -2.0]);
        }
        for t in [0, 1, 5] {
            assert_eq!(fm.rows.row(t).to_vec(), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn co_segment_words_are_averaged() {
        let fm = align_timed_embeddings(
            &[item(&[1.0, 0.0], 10, 100), item(&[0.0, 3.0], 120, 240)],
            2,
            &timeline(1),
            "w",
        )
        .unwrap();
        assert_eq!(fm.rows.row(0).to_vec(), vec![0.5, 1.5]);
    }

    #[test]
    fn boundary_end_stays_in_segment() {
        let fm = align_timed_embeddings(&[item(&[1.0], 0, 250)], 1, &timeline(2), "w").unwrap();
        assert_eq!(fm.rows.column(0).to_vec(), vec![1.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_schema_error() {
        let err = align_timed_embeddings(&[item(&[1.0], 0, 10), item(&[1.0, 2.0], 10, 20)], 1, &timeline(1), "w");
        assert!(matches!(err, Err(Error::Schema(_))));
    }

    #[test]
    fn items_past_the_grid_are_clipped() {
        let fm = align_timed_embeddings(&[item(&[2.0], 400, 900), item(&[5.0], 600, 700)], 1, &timeline(2), "w")
            .unwrap();
        assert_eq!(fm.rows.column(0).to_vec(), vec![0.0, 2.0]);
    }

    #[test]
    fn frame_averaging() {
        let frames = EmbeddingFrames::new(array![[1.0], [2.0], [9.0]], 20.0, 0.0).unwrap();
        let fm = average_frames_to_segments(&frames, &timeline(3), "a").unwrap();
        assert_eq!(fm.rows.column(0).to_vec(), vec![4.0, 4.0, 4.0]);

        let frames = EmbeddingFrames::new(Array2::from_elem((100, 512), 0.25), 20.0, 0.0).unwrap();
        let fm = average_frames_to_segments(&frames, &timeline(8), "a").unwrap();
        assert_eq!(fm.dim(), 512);
        assert!(fm.rows.iter().all(|&v| v == 0.25));
    }

    proptest! {
        #[test]
        fn order_of_items_does_not_matter(
            spans in prop::collection::vec((0u64..2000, 1u64..600, -1.0f64..1.0), 1..12),
        ) {
            let items: Vec<_> = spans.iter().map(|&(s, d, v)| item(&[v, v * 2.0], s, s + d)).collect();
            let mut reversed = items.clone();
            reversed.reverse();
            let a = align_timed_embeddings(&items, 2, &timeline(10), "w").unwrap();
            let b = align_timed_embeddings(&reversed, 2, &timeline(10), "w").unwrap();
            prop_assert_eq!(a.len(), 10);
            for (x, y) in a.rows.iter().zip(b.rows.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn lengthening_a_span_touches_one_segment(
            others in prop::collection::vec((0u64..2500, 1u64..600, -1.0f64..1.0), 0..6),
            start_seg in 0u64..6,
            len_segs in 1u64..3,
            v in -1.0f64..1.0,
        ) {
            let mut items: Vec<_> = others.iter().map(|&(s, d, v)| item(&[v], s, s + d)).collect();
            let start = start_seg * 250;
            items.push(item(&[v], start, start + len_segs * 250));
            let before = align_timed_embeddings(&items, 1, &timeline(10), "w").unwrap();
            items.last_mut().unwrap().end_ms += 250;
            let after = align_timed_embeddings(&items, 1, &timeline(10), "w").unwrap();
            let grown = (start_seg + len_segs) as usize;
            for t in 0..10 {
                if t != grown {
                    prop_assert_eq!(before.rows[[t, 0]], after.rows[[t, 0]]);
                }
            }
        }

        #[test]
        fn frame_output_always_matches_grid(n_frames in 1usize..300, offset in 0.0f64..3000.0, n_seg in 1usize..20) {
            let vectors = Array2::from_shape_fn((n_frames, 2), |(i, j)| (i + j) as f64);
            let frames = EmbeddingFrames::new(vectors, 20.0, offset).unwrap();
            match average_frames_to_segments(&frames, &timeline(n_seg), "a") {
                Ok(fm) => prop_assert_eq!(fm.len(), n_seg),
                // every frame starts after the grid ends
                Err(_) => prop_assert!(offset >= (n_seg * 250) as f64),
            }
        }
    }
}
