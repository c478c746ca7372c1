use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use ndarray::{concatenate, Array2, Axis};

use super::FrameMatrix;
use crate::data::{FeatureMatrix, SegmentTimeline, TimedWord};
use crate::error::{Error, Result};
use crate::pool::{pool_segments, Pooling};

/// Number of descriptor columns in an LLD CSV.
pub const LLD_COUNT: usize = 23;
/// Appended to a feature-set name once the speaker flag column is added.
pub const SPEAKER_FLAG_SUFFIX: &str = "+spk";

/// Mean and population std of the frames starting inside each segment.
/// Output width is twice the frame width.
pub fn summarize_segments(
    frames: &FrameMatrix,
    timeline: &SegmentTimeline,
    feature_set: &str,
) -> Result<FeatureMatrix> {
    if frames.frames.nrows() == 0 {
        return Err(Error::invalid("no frames to summarize"));
    }
    let rows = pool_segments(frames.frames.view(), timeline.n_segments, Pooling::MeanStd, |i| {
        timeline.segment_of_ms(frames.frame_start_ms(i))
    })?;
    FeatureMatrix::new(feature_set, rows, timeline.clone())
}

/// Reads a `time_ms,v1..v23` descriptor CSV and summarizes it per segment
/// (mean + std, 46 columns). Rows past the end of the grid are ignored.
pub fn ingest_lld_csv(path: &Path, timeline: &SegmentTimeline, feature_set: &str) -> Result<FeatureMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let expected: Vec<String> = std::iter::once("time_ms".to_string())
        .chain((1..=LLD_COUNT).map(|i| format!("v{i}")))
        .collect();
    let header = reader.headers()?;
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::schema(format!(
            "{}: header must be time_ms,v1..v{LLD_COUNT}",
            path.display()
        )));
    }

    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let bad = |what: String| Error::schema(format!("{}: row {row}: {what}", path.display()));
        if record.len() != LLD_COUNT + 1 {
            return Err(bad(format!("{} columns, expected {}", record.len(), LLD_COUNT + 1)));
        }
        let mut parsed = record.iter().map(|f| f.trim().parse::<f64>());
        let time = match parsed.next() {
            Some(Ok(t)) if t.is_finite() => t,
            _ => return Err(bad("bad time_ms".into())),
        };
        if let Some(&prev) = times.last() {
            if time < prev {
                return Err(bad(format!("time {time} is earlier than the previous row")));
            }
        }
        for (col, v) in parsed.enumerate() {
            match v {
                Ok(v) if v.is_finite() => values.push(v),
                _ => return Err(bad(format!("bad value in column v{}", col + 1))),
            }
        }
        times.push(time);
    }
    if times.is_empty() {
        return Err(Error::schema(format!("{}: no descriptor rows", path.display())));
    }
    let data = Array2::from_shape_vec((times.len(), LLD_COUNT), values).expect("row lengths checked");
    let rows = pool_segments(data.view(), timeline.n_segments, Pooling::MeanStd, |i| {
        timeline.segment_of_ms(times[i])
    })?;
    FeatureMatrix::new(feature_set, rows, timeline.clone())
}

/// Sorted, non-overlapping intervals where the target speaker talks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpeakerTurns {
    turns: Vec<(u64, u64)>,
}

impl SpeakerTurns {
    pub fn new(turns: Vec<(u64, u64)>) -> Result<Self> {
        for (i, &(s, e)) in turns.iter().enumerate() {
            if e <= s {
                return Err(Error::invalid(format!("turn {i} has end {e} <= start {s}")));
            }
            if i > 0 && s < turns[i - 1].1 {
                return Err(Error::invalid(format!("turn {i} overlaps or precedes turn {}", i - 1)));
            }
        }
        Ok(Self { turns })
    }

    /// Merges word spans into turns; touching or overlapping spans join.
    pub fn from_words(words: &[TimedWord]) -> Self {
        let mut spans: Vec<(u64, u64)> = words.iter().map(|w| (w.start_ms, w.end_ms)).collect();
        spans.sort_unstable();
        let mut turns: Vec<(u64, u64)> = Vec::new();
        for (s, e) in spans {
            match turns.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => turns.push((s, e)),
            }
        }
        Self { turns }
    }

    pub fn turns(&self) -> &[(u64, u64)] {
        &self.turns
    }

    /// Milliseconds of speech inside `[start, end)`.
    pub fn active_ms(&self, start: u64, end: u64) -> u64 {
        self.turns
            .iter()
            .map(|&(s, e)| e.min(end).saturating_sub(s.max(start)))
            .sum()
    }
}

/// Adds a 0/1 column: 1 when the speaker is active for at least half of the
/// segment.
pub fn append_speaker_flag(features: &FeatureMatrix, turns: &SpeakerTurns) -> FeatureMatrix {
    let tl = &features.timeline;
    let flag = Array2::from_shape_fn((tl.n_segments, 1), |(t, _)| {
        let start = tl.segment_start_ms(t);
        let active = turns.active_ms(start, start + tl.segment_ms);
        if 2 * active >= tl.segment_ms {
            1.0
        } else {
            0.0
        }
    });
    FeatureMatrix {
        feature_set: format!("{}{SPEAKER_FLAG_SUFFIX}", features.feature_set),
        rows: concatenate(Axis(1), &[features.rows.view(), flag.view()]).expect("row counts match"),
        timeline: tl.clone(),
    }
}
