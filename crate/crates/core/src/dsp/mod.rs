//! Native acoustic features: WAV input, resampling, MFCC frames and their
//! per-segment summaries.

mod cache;
mod mfcc;
mod resample;
mod segments;

use std::path::Path;

pub use cache::{read_feature_cache, write_feature_cache, FEATURE_CACHE_MAGIC};
pub use mfcc::{extract_mfcc, frame_count, mel_to_hz, hz_to_mel, FrameMatrix, MfccConfig};
pub use resample::{resample, KAISER_BETA, SINC_HALF_WIDTH};
pub use segments::{
    append_speaker_flag, ingest_lld_csv, summarize_segments, SpeakerTurns, LLD_COUNT, SPEAKER_FLAG_SUFFIX,
};

use crate::error::{Error, Result};

/// Mono audio with samples nominally in [−1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("audio contains non-finite samples"));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    /// Duration rounded up to the next whole millisecond.
    pub fn duration_ms(&self) -> u64 {
        (self.samples.len() as u64 * 1000).div_ceil(self.sample_rate_hz as u64)
    }
}

/// Reads a 16-bit PCM mono WAV file.
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(other),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::invalid(format!(
            "{}: {} channels; down-mix to mono before ingestion",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::invalid(format!(
            "{}: only 16-bit PCM is supported",
            path.display()
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    AudioClip::new(samples, spec.sample_rate)
}

/// Writes 16-bit PCM mono. Samples are clipped to [−1, 1].
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &clip.samples {
        writer.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)?;
    }
    writer.finalize()?;
    Ok(())
}
