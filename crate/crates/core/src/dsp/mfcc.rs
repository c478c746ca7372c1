use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::AudioClip;
use crate::error::{Error, Result};

/// MFCC framing and filterbank settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub n_mfcc: usize,
    pub win_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    /// Mel energies are clamped to this value before the log.
    pub log_floor: f64,
    pub f_min_hz: f64,
    /// Upper filterbank edge; Nyquist when `None`.
    pub f_max_hz: Option<f64>,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            n_mfcc: 24,
            win_ms: 30.0,
            hop_ms: 10.0,
            n_mels: 40,
            log_floor: 1e-10,
            f_min_hz: 0.0,
            f_max_hz: None,
        }
    }
}

impl MfccConfig {
    pub fn win_samples(&self, rate: u32) -> usize {
        (self.win_ms * rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, rate: u32) -> usize {
        (self.hop_ms * rate as f64 / 1000.0).round() as usize
    }

    pub fn fft_size(&self, rate: u32) -> usize {
        self.win_samples(rate).next_power_of_two()
    }
}

/// Frame-level features; frame `i` covers `[i·hop, i·hop + win)` ms.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    pub frames: Array2<f64>,
    pub frame_hop_ms: f64,
    pub frame_win_ms: f64,
}

impl FrameMatrix {
    pub fn frame_start_ms(&self, i: usize) -> f64 {
        i as f64 * self.frame_hop_ms
    }
}

/// `floor((S − W)/H) + 1` for `S ≥ W`, else 0.
pub fn frame_count(num_samples: usize, win: usize, hop: usize) -> usize {
    if num_samples < win {
        0
    } else {
        (num_samples - win) / hop + 1
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// One triangular filter stored as its first non-zero bin and weights.
struct MelFilter {
    first_bin: usize,
    weights: Vec<f64>,
}

fn mel_filterbank(n_mels: usize, n_fft: usize, rate: u32, f_min: f64, f_max: f64) -> Vec<MelFilter> {
    let m_lo = hz_to_mel(f_min);
    let m_hi = hz_to_mel(f_max);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let n_bins = n_fft / 2 + 1;
    let bin_hz = rate as f64 / n_fft as f64;
    (0..n_mels)
        .map(|m| {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut first_bin = None;
            let mut weights = Vec::new();
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = ((f - lo) / (center - lo)).min((hi - f) / (hi - center)).max(0.0);
                if w > 0.0 {
                    first_bin.get_or_insert(k);
                    weights.push(w);
                } else if first_bin.is_some() {
                    break;
                }
            }
            MelFilter {
                first_bin: first_bin.unwrap_or(0),
                weights,
            }
        })
        .collect()
}

/// Orthonormal DCT-II basis, `n_out × n_in`.
fn dct_matrix(n_out: usize, n_in: usize) -> Array2<f64> {
    let n = n_in as f64;
    Array2::from_shape_fn((n_out, n_in), |(k, m)| {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        scale * (PI * k as f64 * (2 * m + 1) as f64 / (2.0 * n)).cos()
    })
}

/// Periodic Hann window.
fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Per frame: Hann window, power spectrum, mel filterbank, floored natural
/// log, orthonormal DCT-II, first `n_mfcc` coefficients.
pub fn extract_mfcc(audio: &AudioClip, config: &MfccConfig) -> Result<FrameMatrix> {
    let rate = audio.sample_rate_hz;
    let win = config.win_samples(rate);
    let hop = config.hop_samples(rate);
    if win == 0 || hop == 0 {
        return Err(Error::invalid("window and hop must span at least one sample"));
    }
    if config.n_mfcc == 0 || config.n_mfcc > config.n_mels {
        return Err(Error::invalid("n_mfcc must be in 1..=n_mels"));
    }
    let n_frames = frame_count(audio.samples.len(), win, hop);
    if n_frames == 0 {
        return Err(Error::invalid(format!(
            "audio has {} samples, shorter than one {win}-sample window",
            audio.samples.len()
        )));
    }
    let n_fft = config.fft_size(rate);
    let f_max = config.f_max_hz.unwrap_or(rate as f64 / 2.0);
    let filters = mel_filterbank(config.n_mels, n_fft, rate, config.f_min_hz, f_max);
    let dct = dct_matrix(config.n_mfcc, config.n_mels);
    let window = hann(win);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);

    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut power = vec![0.0; n_fft / 2 + 1];
    let mut log_mel = ndarray::Array1::<f64>::zeros(config.n_mels);
    let mut frames = Array2::<f64>::zeros((n_frames, config.n_mfcc));

    for i in 0..n_frames {
        let chunk = &audio.samples[i * hop..i * hop + win];
        for (slot, (s, w)) in buf.iter_mut().zip(chunk.iter().zip(&window)) {
            *slot = Complex::new(s * w, 0.0);
        }
        for slot in &mut buf[win..] {
            *slot = Complex::new(0.0, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        for (out, filt) in log_mel.iter_mut().zip(&filters) {
            let energy: f64 = filt
                .weights
                .iter()
                .zip(&power[filt.first_bin..])
                .map(|(w, p)| w * p)
                .sum();
            *out = energy.max(config.log_floor).ln();
        }
        frames.row_mut(i).assign(&dct.dot(&log_mel));
    }

    Ok(FrameMatrix {
        frames,
        frame_hop_ms: hop as f64 * 1000.0 / rate as f64,
        frame_win_ms: win as f64 * 1000.0 / rate as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_configuration_shape() {
        let audio = AudioClip::new(vec![0.01; 16000], 16000).unwrap();
        let m = extract_mfcc(&audio, &MfccConfig::default()).unwrap();
        assert_eq!(m.frames.ncols(), 24);
        // (16000 − 480) / 160 + 1
        assert_eq!(m.frames.nrows(), 98);
        assert_eq!(m.frame_hop_ms, 10.0);
        assert_eq!(m.frame_win_ms, 30.0);
    }

    #[test]
    fn silence_gives_identical_frames() {
        let audio = AudioClip::new(vec![0.0; 4000], 8000).unwrap();
        let m = extract_mfcc(&audio, &MfccConfig::default()).unwrap();
        let first = m.frames.row(0).to_owned();
        for row in m.frames.rows() {
            assert_eq!(row, first);
        }
        // Only c0 survives a constant log spectrum.
        let expected_c0 = (1e-10f64).ln() * (40.0f64).sqrt();
        assert!((first[0] - expected_c0).abs() < 1e-9);
        assert!(first.iter().skip(1).all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn too_short_is_rejected() {
        let audio = AudioClip::new(vec![0.0; 100], 8000).unwrap();
        assert!(matches!(
            extract_mfcc(&audio, &MfccConfig::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn deterministic() {
        let samples: Vec<f64> = (0..8000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0 - 0.5).collect();
        let audio = AudioClip::new(samples, 8000).unwrap();
        let a = extract_mfcc(&audio, &MfccConfig::default()).unwrap();
        let b = extract_mfcc(&audio, &MfccConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn filterbank_has_no_empty_filters_at_8k() {
        let filters = mel_filterbank(40, 256, 8000, 0.0, 4000.0);
        assert_eq!(filters.len(), 40);
        assert!(filters.iter().all(|f| !f.weights.is_empty()));
    }

    #[test]
    fn mel_scale_round_trips() {
        for hz in [0.0, 100.0, 1000.0, 4000.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
    }
}
