//! Band-limited resampling with a Kaiser-windowed sinc kernel.

use super::AudioClip;
use crate::error::{Error, Result};

/// Kernel half-width, in samples of the lower of the two rates.
pub const SINC_HALF_WIDTH: usize = 64;
pub const KAISER_BETA: f64 = 8.6;
/// Passband edge relative to the lower Nyquist frequency.
const CUTOFF: f64 = 0.97;
/// Above this many distinct fractional phases the kernel is evaluated per
/// output sample instead of tabulated.
const MAX_TABLE_PHASES: u64 = 4096;

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

struct Kernel {
    cutoff: f64,
    half_width: f64,
    inv_i0_beta: f64,
}

impl Kernel {
    /// Weight at distance `d` source samples from the output position.
    fn weight(&self, d: f64) -> f64 {
        let u = d / self.half_width;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let x = self.cutoff * d;
        let sinc = if x == 0.0 {
            1.0
        } else {
            (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
        };
        let window = bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) * self.inv_i0_beta;
        self.cutoff * sinc * window
    }
}

/// Resamples `audio` to `target_rate_hz`. Output length is
/// `round(len · target / source)`; equal rates return the input unchanged.
pub fn resample(audio: &AudioClip, target_rate_hz: u32) -> Result<AudioClip> {
    let source = audio.sample_rate_hz as u64;
    let target = target_rate_hz as u64;
    if source == 0 || target == 0 {
        return Err(Error::invalid("sample rates must be positive"));
    }
    if source == target {
        return Ok(audio.clone());
    }
    let x = &audio.samples;
    let n_in = x.len() as u64;
    let out_len = ((n_in * target) as f64 / source as f64).round() as usize;

    let ratio = target as f64 / source as f64;
    let kernel = Kernel {
        cutoff: CUTOFF * ratio.min(1.0),
        half_width: SINC_HALF_WIDTH as f64 / ratio.min(1.0),
        inv_i0_beta: 1.0 / bessel_i0(KAISER_BETA),
    };
    let reach = kernel.half_width.ceil() as i64;

    // Output j sits at source position j·source/target = base + num/target.
    let g = gcd(source, target);
    let phases = target / g;
    let taps = (2 * reach + 1) as usize;
    let table: Option<Vec<Vec<f64>>> = (phases <= MAX_TABLE_PHASES).then(|| {
        (0..phases)
            .map(|p| {
                let frac = (p * g) as f64 / target as f64;
                (0..taps)
                    .map(|k| kernel.weight(frac - (k as i64 - reach) as f64))
                    .collect()
            })
            .collect()
    });

    let mut out = Vec::with_capacity(out_len);
    for j in 0..out_len as u64 {
        let pos = j * source;
        let base = (pos / target) as i64;
        let num = pos % target;
        let mut acc = 0.0;
        let lo = (base - reach).max(0);
        let hi = (base + reach).min(n_in as i64 - 1);
        match &table {
            Some(table) => {
                let w = &table[(num / g) as usize];
                for k in lo..=hi {
                    acc += x[k as usize] * w[(k - base + reach) as usize];
                }
            }
            None => {
                let t = base as f64 + num as f64 / target as f64;
                for k in lo..=hi {
                    acc += x[k as usize] * kernel.weight(t - k as f64);
                }
            }
        }
        out.push(acc);
    }
    AudioClip::new(out, target_rate_hz)
}
