//! Seeded synthetic corpus with a known latent emotion curve.
//!
//! Each conversation carries a latent curve `e` on the segment grid. Every
//! modality is a noisy function of it: tone amplitude and pitch in the
//! audio, an affine map for acoustic embedding frames and LLD rows, the sign
//! of `e` for token embeddings, and `e` plus noise for each annotator.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use emocont_core::align::{write_emb1, write_temb, EmbeddingFrames, TimedEmbedding};
use emocont_core::data::{write_annotation_csv, write_transcript, ConversationRecord, DatasetManifest, TimedWord};
use emocont_core::dsp::{write_wav, AudioClip, LLD_COUNT};
use emocont_core::Subset;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const ACOUSTIC_SET: &str = "acoustic-embed";
pub const LINGUISTIC_SET: &str = "linguistic-embed";
pub const LLD_SET: &str = "egemaps-stats";
pub const LLD_HOP_MS: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub min_duration_ms: u64,
    pub max_duration_ms: u64,
    pub segment_ms: u64,
    pub seed: u64,
    pub sample_rate_hz: u32,
    pub acoustic_dim: usize,
    pub acoustic_frame_ms: u64,
    pub linguistic_dim: usize,
    pub annotators: usize,
    pub annotator_noise: f64,
    pub embedding_noise: f64,
    pub audio_noise: f64,
    /// Standard deviation of one random-walk step per segment.
    pub walk_step: f64,
    /// Weight of the new sample in the two-pass exponential smoother.
    pub smoothing: f64,
    /// Also write 23-column LLD CSVs.
    pub lld: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_train: 10,
            n_dev: 3,
            n_test: 3,
            min_duration_ms: 60_000,
            max_duration_ms: 120_000,
            segment_ms: 250,
            seed: 0,
            sample_rate_hz: 8000,
            acoustic_dim: 512,
            acoustic_frame_ms: 20,
            linguistic_dim: 768,
            annotators: 3,
            annotator_noise: 0.1,
            embedding_noise: 1.0,
            audio_noise: 0.01,
            walk_step: 0.1,
            smoothing: 0.2,
            lld: true,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_dev == 0 || self.n_test == 0 {
            bail!("every subset needs at least one conversation");
        }
        if self.segment_ms == 0 || self.min_duration_ms < self.segment_ms || self.max_duration_ms < self.min_duration_ms {
            bail!(
                "durations must satisfy segment_ms ({}) <= min ({}) <= max ({})",
                self.segment_ms,
                self.min_duration_ms,
                self.max_duration_ms
            );
        }
        if self.annotators == 0 || self.acoustic_dim == 0 || self.linguistic_dim == 0 || self.acoustic_frame_ms == 0 {
            bail!("annotators, embedding dims and frame period must be positive");
        }
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            bail!("smoothing must lie in (0, 1]");
        }
        Ok(())
    }

    /// `(id, subset)` for every conversation, in generation order.
    pub fn conversation_ids(&self) -> Vec<(String, Subset)> {
        let mut ids = Vec::new();
        for (subset, n) in [(Subset::Train, self.n_train), (Subset::Dev, self.n_dev), (Subset::Test, self.n_test)] {
            for k in 0..n {
                ids.push((format!("{subset}_{k:02}"), subset));
            }
        }
        ids
    }
}

/// Directions shared by every conversation so the mapping from `e` to each
/// modality is learnable.
struct Projections {
    acoustic_gain: Vec<f64>,
    acoustic_offset: Vec<f64>,
    linguistic_gain: Vec<f64>,
    lld_gain: Vec<f64>,
    lld_offset: Vec<f64>,
}

impl Projections {
    fn new(spec: &SynthSpec) -> Self {
        let mut rng = stream(spec.seed, 0);
        let mut normal = |n: usize, s: f64| -> Vec<f64> {
            (0..n)
                .map(|_| s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect()
        };
        Self {
            acoustic_gain: normal(spec.acoustic_dim, 1.0),
            acoustic_offset: normal(spec.acoustic_dim, 0.5),
            linguistic_gain: normal(spec.linguistic_dim, 1.0),
            lld_gain: normal(LLD_COUNT, 1.0),
            lld_offset: normal(LLD_COUNT, 2.0),
        }
    }
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One generated conversation, held in memory.
pub struct SynthConversation {
    pub id: String,
    pub subset: Subset,
    pub segment_ms: u64,
    /// Latent value of every segment.
    pub latent: Vec<f64>,
    pub audio: AudioClip,
    pub words: Vec<TimedWord>,
    pub acoustic: EmbeddingFrames,
    pub linguistic: Vec<TimedEmbedding>,
    /// `time_ms` followed by the descriptor values, one row every 10 ms.
    pub lld: Vec<(u64, Vec<f64>)>,
    pub annotations: Vec<Vec<f64>>,
}

impl SynthConversation {
    pub fn duration_ms(&self) -> u64 {
        self.latent.len() as u64 * self.segment_ms
    }
}

/// Reflecting random walk in [−1, 1], smoothed forward and backward.
pub fn latent_curve(rng: &mut impl Rng, n: usize, step: f64, smoothing: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, step).expect("finite step");
    let mut x: f64 = rng.random_range(-0.5..0.5);
    let mut walk = Vec::with_capacity(n);
    for _ in 0..n {
        walk.push(x);
        x += normal.sample(rng);
        while !(-1.0..=1.0).contains(&x) {
            x = if x > 1.0 { 2.0 - x } else { -2.0 - x };
        }
    }
    let mut acc = walk[0];
    for v in walk.iter_mut() {
        acc += smoothing * (*v - acc);
        *v = acc;
    }
    let mut acc = *walk.last().expect("n > 0");
    for v in walk.iter_mut().rev() {
        acc += smoothing * (*v - acc);
        *v = acc;
    }
    walk
}

/// Linear interpolation of segment values placed at segment centers.
fn latent_at(latent: &[f64], segment_ms: u64, t_ms: f64) -> f64 {
    let pos = t_ms / segment_ms as f64 - 0.5;
    if pos <= 0.0 {
        return latent[0];
    }
    let k = pos.floor() as usize;
    if k + 1 >= latent.len() {
        return latent[latent.len() - 1];
    }
    let frac = pos - k as f64;
    latent[k] * (1.0 - frac) + latent[k + 1] * frac
}

fn noise(rng: &mut impl Rng, scale: f64) -> f64 {
    scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

fn generate(spec: &SynthSpec, proj: &Projections, index: usize, id: String, subset: Subset) -> Result<SynthConversation> {
    let mut rng = stream(spec.seed, index as u64 + 1);
    let seg = spec.segment_ms;
    let duration_ms = rng.random_range(spec.min_duration_ms..=spec.max_duration_ms) / seg * seg;
    let n_seg = (duration_ms / seg) as usize;
    let latent = latent_curve(&mut rng, n_seg, spec.walk_step, spec.smoothing);

    let sr = spec.sample_rate_hz as f64;
    let n_samples = (duration_ms as f64 * sr / 1000.0).round() as usize;
    let mut phase = 0.0;
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let e = latent_at(&latent, seg, i as f64 * 1000.0 / sr);
        let amp = 0.15 * (1.2 * e).exp();
        let pitch = 180.0 * 2f64.powf(0.5 * e);
        phase = (phase + TAU * pitch / sr) % TAU;
        samples.push(amp * phase.sin() + noise(&mut rng, spec.audio_noise));
    }
    let audio = AudioClip::new(samples, spec.sample_rate_hz)?;

    let frame_ms = spec.acoustic_frame_ms;
    let n_frames = (duration_ms / frame_ms) as usize;
    let mut vectors = Array2::<f64>::zeros((n_frames, spec.acoustic_dim));
    for (i, mut row) in vectors.rows_mut().into_iter().enumerate() {
        let e = latent_at(&latent, seg, (i as f64 + 0.5) * frame_ms as f64);
        for (d, v) in row.iter_mut().enumerate() {
            *v = e * proj.acoustic_gain[d] + proj.acoustic_offset[d] + noise(&mut rng, spec.embedding_noise);
        }
    }
    let acoustic = EmbeddingFrames::new(vectors, frame_ms as f64, 0.0)?;

    let mut words = Vec::new();
    let mut linguistic = Vec::new();
    let mut t = 0u64;
    loop {
        let gap = if rng.random_bool(0.15) {
            rng.random_range(800..2500)
        } else {
            rng.random_range(0..200)
        };
        let start = t + gap;
        let end = start + rng.random_range(150..600);
        if end > duration_ms {
            break;
        }
        let k = words.len();
        let sign = if latent_at(&latent, seg, (start + end) as f64 / 2.0) >= 0.0 {
            1.0
        } else {
            -1.0
        };
        // Some words come out of the tokenizer as three sub-words sharing the
        // parent's span.
        let pieces = if rng.random_bool(0.1) { 3 } else { 1 };
        for _ in 0..pieces {
            linguistic.push(TimedEmbedding {
                vector: proj
                    .linguistic_gain
                    .iter()
                    .map(|g| sign * g + noise(&mut rng, spec.embedding_noise))
                    .collect(),
                start_ms: start,
                end_ms: end,
            });
        }
        words.push(TimedWord {
            token: format!("w{k}"),
            start_ms: start,
            end_ms: end,
        });
        t = end;
    }

    let mut lld = Vec::new();
    if spec.lld {
        let mut time = 0;
        while time < duration_ms {
            let e = latent_at(&latent, seg, time as f64 + LLD_HOP_MS as f64 / 2.0);
            let row = (0..LLD_COUNT)
                .map(|j| e * proj.lld_gain[j] + proj.lld_offset[j] + noise(&mut rng, 0.5))
                .collect();
            lld.push((time, row));
            time += LLD_HOP_MS;
        }
    }

    let annotations = (0..spec.annotators)
        .map(|_| {
            latent
                .iter()
                .map(|&e| (e + noise(&mut rng, spec.annotator_noise)).clamp(-1.0, 1.0))
                .collect()
        })
        .collect();

    Ok(SynthConversation {
        id,
        subset,
        segment_ms: seg,
        latent,
        audio,
        words,
        acoustic,
        linguistic,
        lld,
        annotations,
    })
}

/// Generates every conversation of `spec` in memory.
pub fn generate_conversations(spec: &SynthSpec) -> Result<Vec<SynthConversation>> {
    spec.validate()?;
    let proj = Projections::new(spec);
    spec.conversation_ids()
        .into_par_iter()
        .enumerate()
        .map(|(i, (id, subset))| generate(spec, &proj, i, id, subset))
        .collect()
}

fn write_lld_csv(path: &Path, rows: &[(u64, Vec<f64>)]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write!(w, "time_ms")?;
    for j in 1..=LLD_COUNT {
        write!(w, ",v{j}")?;
    }
    writeln!(w)?;
    for (t, row) in rows {
        write!(w, "{t}")?;
        for v in row {
            write!(w, ",{v:.6}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn write_conversation(out: &Path, c: &SynthConversation) -> Result<ConversationRecord> {
    let rel = |parts: &[&str]| parts.iter().collect::<PathBuf>();
    let audio = rel(&["audio", &format!("{}.wav", c.id)]);
    write_wav(&out.join(&audio), &c.audio)?;
    let transcript = rel(&["transcripts", &format!("{}.json", c.id)]);
    write_transcript(&out.join(&transcript), &c.words)?;
    let mut annotations = Vec::new();
    for (k, values) in c.annotations.iter().enumerate() {
        let p = rel(&["annotations", &format!("{}_a{k}.csv", c.id)]);
        write_annotation_csv(&out.join(&p), values)?;
        annotations.push(p);
    }
    let mut embeddings = BTreeMap::new();
    let p = rel(&["embeddings", ACOUSTIC_SET, &format!("{}.emb1", c.id)]);
    write_emb1(&out.join(&p), &c.acoustic)?;
    embeddings.insert(ACOUSTIC_SET.to_string(), p);
    let p = rel(&["embeddings", LINGUISTIC_SET, &format!("{}.temb", c.id)]);
    write_temb(&out.join(&p), c.linguistic.first().map_or(0, |e| e.vector.len()), &c.linguistic)?;
    embeddings.insert(LINGUISTIC_SET.to_string(), p);
    if !c.lld.is_empty() {
        let p = rel(&["embeddings", LLD_SET, &format!("{}.csv", c.id)]);
        write_lld_csv(&out.join(&p), &c.lld)?;
        embeddings.insert(LLD_SET.to_string(), p);
    }
    Ok(ConversationRecord {
        id: c.id.clone(),
        audio,
        transcript: Some(transcript),
        annotations,
        embeddings,
        subset: c.subset,
        segment_ms: c.segment_ms,
    })
}

/// Writes the corpus under `out` and returns the manifest path. Paths in the
/// manifest are relative to `out`.
pub fn write_corpus(spec: &SynthSpec, out: &Path) -> Result<PathBuf> {
    spec.validate()?;
    for dir in [
        PathBuf::from("audio"),
        PathBuf::from("transcripts"),
        PathBuf::from("annotations"),
        ["embeddings", ACOUSTIC_SET].iter().collect(),
        ["embeddings", LINGUISTIC_SET].iter().collect(),
        ["embeddings", LLD_SET].iter().collect(),
    ] {
        let d = out.join(dir);
        fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
    }
    let proj = Projections::new(spec);
    let records = spec
        .conversation_ids()
        .into_par_iter()
        .enumerate()
        .map(|(i, (id, subset))| write_conversation(out, &generate(spec, &proj, i, id, subset)?))
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        root: out.to_path_buf(),
        conversations: records,
    };
    let path = out.join("manifest.json");
    manifest.save(&path)?;
    fs::write(out.join("synth.json"), serde_json::to_string_pretty(spec)? + "\n")?;
    Ok(path)
}
