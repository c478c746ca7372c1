//! Shared data model: segment timelines, annotation tracks, feature matrices,
//! dataset manifests and input normalization.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to per-dimension standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// The emotional-segment grid of one conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentTimeline {
    pub conversation_id: String,
    pub segment_ms: u64,
    pub n_segments: usize,
}

impl SegmentTimeline {
    pub fn new(conversation_id: impl Into<String>, segment_ms: u64, n_segments: usize) -> Result<Self> {
        if segment_ms == 0 {
            return Err(Error::invalid("segment_ms must be positive"));
        }
        if n_segments == 0 {
            return Err(Error::invalid("a timeline needs at least one segment"));
        }
        Ok(Self {
            conversation_id: conversation_id.into(),
            segment_ms,
            n_segments,
        })
    }

    /// Start time of segment `t` in milliseconds.
    pub fn segment_start_ms(&self, t: usize) -> u64 {
        t as u64 * self.segment_ms
    }

    /// Total span covered by the grid.
    pub fn span_ms(&self) -> u64 {
        self.n_segments as u64 * self.segment_ms
    }

    /// Segment containing time `ms`, or `None` past the end of the grid.
    pub fn segment_of_ms(&self, ms: f64) -> Option<usize> {
        if ms < 0.0 {
            return Some(0);
        }
        let t = (ms / self.segment_ms as f64).floor() as usize;
        (t < self.n_segments).then_some(t)
    }
}

/// Splits `audio_duration_ms` into fixed-length segments. A trailing partial
/// segment counts as a full one.
pub fn build_timeline(
    conversation_id: impl Into<String>,
    audio_duration_ms: u64,
    segment_ms: u64,
) -> Result<SegmentTimeline> {
    if audio_duration_ms == 0 {
        return Err(Error::invalid("audio duration must be positive"));
    }
    if segment_ms == 0 {
        return Err(Error::invalid("segment_ms must be positive"));
    }
    let n = audio_duration_ms.div_ceil(segment_ms) as usize;
    SegmentTimeline::new(conversation_id, segment_ms, n)
}

/// One annotator's continuous trace for one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationTrack {
    pub annotator_id: String,
    pub dimension: String,
    pub values: Vec<f64>,
}

/// Merged per-segment reference values.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldTrack {
    pub dimension: String,
    pub values: Vec<f64>,
}

/// Element-wise mean of annotator tracks.
pub fn merge_annotations(tracks: &[AnnotationTrack]) -> Result<GoldTrack> {
    let first = tracks
        .first()
        .ok_or_else(|| Error::invalid("cannot merge an empty list of annotation tracks"))?;
    let len = first.values.len();
    for track in tracks {
        if track.dimension != first.dimension {
            return Err(Error::schema(format!(
                "annotator {} labels dimension '{}', expected '{}'",
                track.annotator_id, track.dimension, first.dimension
            )));
        }
        if track.values.len() != len {
            return Err(Error::schema(format!(
                "annotator {} has {} segments, expected {}",
                track.annotator_id,
                track.values.len(),
                len
            )));
        }
        if let Some(i) = track.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::schema(format!(
                "annotator {} has a non-finite value at segment {i}",
                track.annotator_id
            )));
        }
    }
    let n = tracks.len() as f64;
    let values = (0..len)
        .map(|t| tracks.iter().map(|tr| tr.values[t]).sum::<f64>() / n)
        .collect();
    Ok(GoldTrack {
        dimension: first.dimension.clone(),
        values,
    })
}

/// Per-segment feature rows of one conversation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub feature_set: String,
    pub rows: Array2<f64>,
    pub timeline: SegmentTimeline,
}

impl FeatureMatrix {
    pub fn new(feature_set: impl Into<String>, rows: Array2<f64>, timeline: SegmentTimeline) -> Result<Self> {
        let feature_set = feature_set.into();
        if rows.nrows() != timeline.n_segments {
            return Err(Error::schema(format!(
                "{}: feature matrix has {} rows but the timeline has {} segments",
                timeline.conversation_id,
                rows.nrows(),
                timeline.n_segments
            )));
        }
        if rows.ncols() == 0 {
            return Err(Error::schema(format!("{}: feature dimension is zero", feature_set)));
        }
        if let Some(((t, d), _)) = rows.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::schema(format!(
                "{}: non-finite feature at segment {t}, column {d}",
                timeline.conversation_id
            )));
        }
        Ok(Self {
            feature_set,
            rows,
            timeline,
        })
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }
}

/// A transcribed word with its time span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedWord {
    pub token: String,
    pub start_ms: u64,
    pub end_ms: u64,
}

/// Per-segment scalar predictions of one model for one conversation.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTrack {
    pub conversation_id: String,
    pub values: Vec<f64>,
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Dev,
    Test,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Dev => "dev",
            Subset::Test => "test",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Subset::Train),
            "dev" => Ok(Subset::Dev),
            "test" => Ok(Subset::Test),
            other => Err(Error::invalid(format!("unknown subset '{other}'"))),
        }
    }
}

/// One conversation as listed in a manifest file. Paths are stored as
/// written; relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConversationRecord {
    pub id: String,
    pub audio: PathBuf,
    pub transcript: Option<PathBuf>,
    pub annotations: Vec<PathBuf>,
    pub embeddings: BTreeMap<String, PathBuf>,
    pub subset: Subset,
    pub segment_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    /// Directory relative paths are resolved against.
    pub root: PathBuf,
    pub conversations: Vec<ConversationRecord>,
}

impl DatasetManifest {
    /// Parses and checks the structural invariants (unique ids, at least one
    /// annotation, positive segment length). Referenced files are not touched.
    pub fn from_json(json: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let conversations: Vec<ConversationRecord> = serde_json::from_str(json)?;
        let mut seen = HashSet::new();
        for rec in &conversations {
            if !seen.insert(rec.id.as_str()) {
                return Err(Error::schema(format!("duplicate conversation id '{}'", rec.id)));
            }
            if rec.annotations.is_empty() {
                return Err(Error::schema(format!("conversation {}: no annotation files", rec.id)));
            }
            if rec.segment_ms == 0 {
                return Err(Error::schema(format!("conversation {}: segment_ms must be positive", rec.id)));
            }
        }
        Ok(Self {
            root: root.into(),
            conversations,
        })
    }

    /// Reads a manifest without checking that the files it references exist.
    pub fn load_unchecked(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, root)
    }

    /// Reads a manifest and requires every referenced path to exist.
    pub fn load(path: &Path) -> Result<Self> {
        let manifest = Self::load_unchecked(path)?;
        let missing = manifest.missing_paths();
        if !missing.is_empty() {
            let lines: Vec<String> = missing
                .iter()
                .map(|(id, p)| format!("conversation {id}: missing {}", p.display()))
                .collect();
            return Err(Error::schema(lines.join("; ")));
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.conversations)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Every (conversation id, resolved path) whose file is absent.
    pub fn missing_paths(&self) -> Vec<(String, PathBuf)> {
        let mut missing = Vec::new();
        for rec in &self.conversations {
            let referenced = std::iter::once(&rec.audio)
                .chain(rec.transcript.iter())
                .chain(rec.annotations.iter())
                .chain(rec.embeddings.values());
            for p in referenced {
                let full = self.resolve(p);
                if !full.exists() {
                    missing.push((rec.id.clone(), full));
                }
            }
        }
        missing
    }

    pub fn subset(&self, subset: Subset) -> impl Iterator<Item = &ConversationRecord> {
        self.conversations.iter().filter(move |c| c.subset == subset)
    }

    /// Like [`subset`](Self::subset) but fails when nothing matches.
    pub fn require_subset(&self, subset: Subset) -> Result<Vec<&ConversationRecord>> {
        let recs: Vec<_> = self.subset(subset).collect();
        if recs.is_empty() {
            return Err(Error::invalid(format!("manifest has no '{subset}' conversations")));
        }
        Ok(recs)
    }

    pub fn get(&self, id: &str) -> Option<&ConversationRecord> {
        self.conversations.iter().find(|c| c.id == id)
    }

    /// Loads every annotation file of `rec` and merges them.
    pub fn load_gold(&self, rec: &ConversationRecord, dimension: &str) -> Result<GoldTrack> {
        let tracks = rec
            .annotations
            .iter()
            .enumerate()
            .map(|(k, p)| read_annotation_csv(&self.resolve(p), &format!("a{k}"), dimension))
            .collect::<Result<Vec<_>>>()?;
        merge_annotations(&tracks)
    }
}

const ANNOTATION_HEADER: [&str; 2] = ["segment_index", "value"];

pub fn read_annotation_csv(path: &Path, annotator_id: &str, dimension: &str) -> Result<AnnotationTrack> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(BufReader::new(file));
    let header = reader.headers()?;
    if header.iter().ne(ANNOTATION_HEADER) {
        return Err(Error::schema(format!(
            "{}: expected header 'segment_index,value'",
            path.display()
        )));
    }
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let bad = |what: &str| Error::schema(format!("{}: line {line}: {what}", path.display()));
        if record.len() != 2 {
            return Err(bad("expected 2 columns"));
        }
        let index: usize = record[0].trim().parse().map_err(|_| bad("bad segment_index"))?;
        if index != i {
            return Err(bad(&format!("segment_index {index} out of sequence, expected {i}")));
        }
        let value: f64 = record[1].trim().parse().map_err(|_| bad("bad value"))?;
        if !value.is_finite() {
            return Err(bad("non-finite value"));
        }
        values.push(value);
    }
    if values.is_empty() {
        return Err(Error::schema(format!("{}: no annotation rows", path.display())));
    }
    Ok(AnnotationTrack {
        annotator_id: annotator_id.to_string(),
        dimension: dimension.to_string(),
        values,
    })
}

pub fn write_annotation_csv(path: &Path, values: &[f64]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "segment_index,value").map_err(io)?;
    for (i, v) in values.iter().enumerate() {
        writeln!(w, "{i},{v}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_transcript(path: &Path) -> Result<Vec<TimedWord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let words: Vec<TimedWord> = serde_json::from_str(&text)?;
    for (i, w) in words.iter().enumerate() {
        if w.end_ms <= w.start_ms {
            return Err(Error::schema(format!(
                "{}: word {i} ('{}') ends before it starts",
                path.display(),
                w.token
            )));
        }
        if i > 0 {
            let prev = &words[i - 1];
            if (prev.start_ms, prev.end_ms) > (w.start_ms, w.end_ms) {
                return Err(Error::schema(format!("{}: word {i} is out of order", path.display())));
            }
        }
    }
    Ok(words)
}

pub fn write_transcript(path: &Path, words: &[TimedWord]) -> Result<()> {
    let json = serde_json::to_string(words)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Per-dimension standardization statistics of one feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub feature_set: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let stats: NormStats = serde_json::from_str(&text)?;
        if stats.mean.len() != stats.std.len() || stats.mean.is_empty() {
            return Err(Error::schema(format!("{}: mean/std length mismatch", path.display())));
        }
        Ok(stats)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Mean and population standard deviation pooled over every segment of
/// every matrix. Standard deviations are floored at [`STD_FLOOR`].
pub fn fit_norm_stats(train_features: &[FeatureMatrix]) -> Result<NormStats> {
    let first = train_features
        .first()
        .ok_or_else(|| Error::invalid("no feature matrices to fit normalization on"))?;
    let dim = first.dim();
    for fm in train_features {
        if fm.dim() != dim || fm.feature_set != first.feature_set {
            return Err(Error::schema(format!(
                "{}: feature set '{}' with D={} does not match '{}' with D={}",
                fm.timeline.conversation_id,
                fm.feature_set,
                fm.dim(),
                first.feature_set,
                dim
            )));
        }
    }
    let count: usize = train_features.iter().map(FeatureMatrix::len).sum();
    let n = count as f64;

    let mut mean = Array1::<f64>::zeros(dim);
    for fm in train_features {
        mean += &fm.rows.sum_axis(Axis(0));
    }
    mean /= n;

    let mut var = Array1::<f64>::zeros(dim);
    for fm in train_features {
        for row in fm.rows.rows() {
            var.zip_mut_with(&(&row - &mean), |acc, d| *acc += d * d);
        }
    }
    var /= n;

    Ok(NormStats {
        feature_set: first.feature_set.clone(),
        mean: mean.to_vec(),
        std: var.iter().map(|v| v.sqrt().max(STD_FLOOR)).collect(),
    })
}

/// Standardizes `features` with `stats`.
pub fn apply_norm(features: &FeatureMatrix, stats: &NormStats) -> Result<FeatureMatrix> {
    if features.dim() != stats.dim() {
        return Err(Error::schema(format!(
            "{}: features have D={} but normalization stats have D={}",
            features.timeline.conversation_id,
            features.dim(),
            stats.dim()
        )));
    }
    let mean = Array1::from(stats.mean.clone());
    let std = Array1::from(stats.std.clone());
    let rows = (&features.rows - &mean) / &std;
    Ok(FeatureMatrix {
        feature_set: features.feature_set.clone(),
        rows,
        timeline: features.timeline.clone(),
    })
}
