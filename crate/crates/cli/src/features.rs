//! Per-conversation feature construction and the on-disk cache.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use emocont_core::align::{align_timed_embeddings, average_frames_to_segments, read_embedding_file, EmbeddingFile};
use emocont_core::data::{build_timeline, read_transcript, ConversationRecord, DatasetManifest, FeatureMatrix};
use emocont_core::dsp::{
    append_speaker_flag, extract_mfcc, ingest_lld_csv, read_feature_cache, read_wav, resample, summarize_segments,
    write_feature_cache, MfccConfig, SpeakerTurns, SPEAKER_FLAG_SUFFIX,
};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::base_feature_set;

pub const MFCC_SET: &str = "mfcc-stats";

/// Bumped whenever extraction output changes for identical inputs.
const EXTRACTOR_VERSION: &str = "emocont-extract-1";

/// What one feature set reads for one conversation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureInputs {
    pub audio: PathBuf,
    /// Embedding or LLD file; `None` for MFCC statistics.
    pub source: Option<PathBuf>,
    /// Transcript used for the speaker flag.
    pub transcript: Option<PathBuf>,
}

pub fn feature_inputs(manifest: &DatasetManifest, rec: &ConversationRecord, feature_set: &str) -> Result<FeatureInputs> {
    let base = base_feature_set(feature_set);
    let source = if base == MFCC_SET {
        None
    } else {
        let p = rec
            .embeddings
            .get(base)
            .ok_or_else(|| anyhow!("conversation {}: no '{base}' entry under embeddings", rec.id))?;
        Some(manifest.resolve(p))
    };
    let transcript = if feature_set.ends_with(SPEAKER_FLAG_SUFFIX) {
        let p = rec
            .transcript
            .as_ref()
            .ok_or_else(|| anyhow!("conversation {}: speaker flag needs a transcript", rec.id))?;
        Some(manifest.resolve(p))
    } else {
        None
    };
    Ok(FeatureInputs {
        audio: manifest.resolve(&rec.audio),
        source,
        transcript,
    })
}

/// Hex SHA-256 over every input byte and the extraction settings.
pub fn content_hash(inputs: &FeatureInputs, feature_set: &str, segment_ms: u64, resample_hz: Option<u32>) -> Result<String> {
    let mut h = Sha256::new();
    h.update(EXTRACTOR_VERSION.as_bytes());
    h.update([0]);
    h.update(feature_set.as_bytes());
    h.update([0]);
    h.update(segment_ms.to_le_bytes());
    h.update(resample_hz.unwrap_or(0).to_le_bytes());
    let files = std::iter::once(&inputs.audio)
        .chain(inputs.source.iter())
        .chain(inputs.transcript.iter());
    for p in files {
        let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

/// Builds the feature matrix of one conversation from its raw inputs.
pub fn build_features(
    rec: &ConversationRecord,
    inputs: &FeatureInputs,
    feature_set: &str,
    resample_hz: Option<u32>,
) -> Result<FeatureMatrix> {
    let audio = read_wav(&inputs.audio)?;
    let timeline = build_timeline(&rec.id, audio.duration_ms(), rec.segment_ms)?;
    let base = base_feature_set(feature_set);
    let features = match &inputs.source {
        None => {
            let audio = match resample_hz {
                Some(rate) => resample(&audio, rate)?,
                None => audio,
            };
            let frames = extract_mfcc(&audio, &MfccConfig::default())?;
            summarize_segments(&frames, &timeline, base)?
        }
        Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => ingest_lld_csv(p, &timeline, base)?,
        Some(p) => match read_embedding_file(p)? {
            EmbeddingFile::Frames(frames) => average_frames_to_segments(&frames, &timeline, base)?,
            EmbeddingFile::Timed { dim, items } => align_timed_embeddings(&items, dim, &timeline, base)?,
        },
    };
    match &inputs.transcript {
        Some(t) => {
            let words = read_transcript(t)?;
            Ok(append_speaker_flag(&features, &SpeakerTurns::from_words(&words)))
        }
        None => Ok(features),
    }
}

pub fn cache_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.fea"))
}

fn hash_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.hash"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Written,
    UpToDate,
}

/// Extracts one conversation into `dir` unless the cache already matches
/// the inputs' content hash.
pub fn extract_one(
    manifest: &DatasetManifest,
    rec: &ConversationRecord,
    feature_set: &str,
    resample_hz: Option<u32>,
    dir: &Path,
) -> Result<(CacheStatus, usize)> {
    let inputs = feature_inputs(manifest, rec, feature_set)?;
    for p in std::iter::once(&inputs.audio)
        .chain(inputs.source.iter())
        .chain(inputs.transcript.iter())
    {
        if !p.exists() {
            bail!("missing input {}", p.display());
        }
    }
    let hash = content_hash(&inputs, feature_set, rec.segment_ms, resample_hz)?;
    let cache = cache_path(dir, &rec.id);
    let sidecar = hash_path(dir, &rec.id);
    if cache.exists() && std::fs::read_to_string(&sidecar).is_ok_and(|h| h.trim() == hash) {
        let fm = read_feature_cache(&cache, &rec.id)?;
        return Ok((CacheStatus::UpToDate, fm.dim()));
    }
    let fm = build_features(rec, &inputs, feature_set, resample_hz)?;
    write_feature_cache(&cache, &fm)?;
    std::fs::write(&sidecar, format!("{hash}\n")).with_context(|| format!("writing {}", sidecar.display()))?;
    Ok((CacheStatus::Written, fm.dim()))
}

/// Outcome of extracting a whole manifest.
#[derive(Debug, Default)]
pub struct ExtractSummary {
    pub written: Vec<String>,
    pub up_to_date: Vec<String>,
    /// `(conversation id, message)` for every conversation that failed.
    pub failures: Vec<(String, String)>,
    pub dim: Option<usize>,
}

pub fn extract_all(manifest: &DatasetManifest, feature_set: &str, resample_hz: Option<u32>, dir: &Path) -> Result<ExtractSummary> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let results: Vec<_> = manifest
        .conversations
        .par_iter()
        .map(|rec| (rec.id.clone(), extract_one(manifest, rec, feature_set, resample_hz, dir)))
        .collect();
    let mut summary = ExtractSummary::default();
    for (id, r) in results {
        match r {
            Ok((status, dim)) => {
                if let Some(d) = summary.dim {
                    if d != dim {
                        summary
                            .failures
                            .push((id.clone(), format!("D={dim} differs from D={d} of earlier conversations")));
                        continue;
                    }
                }
                summary.dim = Some(dim);
                match status {
                    CacheStatus::Written => summary.written.push(id),
                    CacheStatus::UpToDate => summary.up_to_date.push(id),
                }
            }
            Err(e) => summary.failures.push((id, format!("{e:#}"))),
        }
    }
    Ok(summary)
}

/// Reads the cached matrix of `rec`, naming the conversation on failure.
pub fn load_cached(dir: &Path, rec: &ConversationRecord) -> Result<FeatureMatrix> {
    let p = cache_path(dir, &rec.id);
    if !p.exists() {
        bail!("conversation {}: no feature cache at {} (run extract first)", rec.id, p.display());
    }
    read_feature_cache(&p, &rec.id).with_context(|| format!("conversation {}", rec.id))
}
