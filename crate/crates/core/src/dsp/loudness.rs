//! Integrated loudness (ITU-R BS.1770-4, mono) and loudness-matched mixing.
//!
//! K-weighting is a high shelf followed by a high pass. The analog
//! prototypes are re-derived for the actual sample rate with the bilinear
//! transform, so 16 kHz material gets the same curve as 48 kHz material.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::Error;

const ABSOLUTE_GATE_LUFS: f64 = -70.0;
const RELATIVE_GATE_LU: f64 = -10.0;
const BLOCK_SECONDS: f64 = 0.4;
const STEP_SECONDS: f64 = 0.1;

/// Second-order section, `a0` normalized to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Stage 1: +4 dB high shelf around 1.68 kHz.
    pub fn high_shelf(sample_rate: f64) -> Biquad {
        let gain_db = 3.999_843_853_973_347;
        let q = 0.707_175_236_955_419_3;
        let fc = 1_681.974_450_955_532;
        let k = libm::tan(PI * fc / sample_rate);
        let vh = libm::pow(10.0, gain_db / 20.0);
        let vb = libm::pow(vh, 0.499_666_774_154_541_6);
        let a0 = 1.0 + k / q + k * k;
        Biquad {
            b: [
                (vh + vb * k / q + k * k) / a0,
                2.0 * (k * k - vh) / a0,
                (vh - vb * k / q + k * k) / a0,
            ],
            a: [2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0],
        }
    }

    /// Stage 2: high pass around 38 Hz.
    pub fn high_pass(sample_rate: f64) -> Biquad {
        let q = 0.500_327_037_323_877_3;
        let fc = 38.135_470_876_139_82;
        let k = libm::tan(PI * fc / sample_rate);
        let a0 = 1.0 + k / q + k * k;
        Biquad {
            b: [1.0, -2.0, 1.0],
            a: [2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0],
        }
    }

    /// Direct form I over a whole signal.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        x.iter()
            .map(|&x0| {
                let y0 = self.b[0] * x0 + self.b[1] * x1 + self.b[2] * x2
                    - self.a[0] * y1
                    - self.a[1] * y2;
                x2 = x1;
                x1 = x0;
                y2 = y1;
                y1 = y0;
                y0
            })
            .collect()
    }
}

/// Integrated loudness in LUFS.
///
/// Returns negative infinity when no block passes the absolute gate
/// (digital silence or near-silence).
pub fn lufs(signal: &[f64], sample_rate: u32) -> Result<f64, Error> {
    let fs = sample_rate as f64;
    let block = libm::round(BLOCK_SECONDS * fs) as usize;
    let step = libm::round(STEP_SECONDS * fs) as usize;
    if sample_rate == 0 || signal.len() < block {
        return Err(Error::SignalTooShort {
            needed: block,
            found: signal.len(),
        });
    }
    let weighted = Biquad::high_pass(fs).filter(&Biquad::high_shelf(fs).filter(signal));
    let powers: Vec<f64> = (0..=(weighted.len() - block) / step)
        .map(|j| {
            let s = &weighted[j * step..j * step + block];
            s.iter().map(|v| v * v).sum::<f64>() / block as f64
        })
        .collect();
    let loudness = |p: f64| -0.691 + 10.0 * libm::log10(p);
    let gated_mean = |threshold: f64| {
        let (sum, n) = powers
            .iter()
            .filter(|&&p| p > 0.0 && loudness(p) > threshold)
            .fold((0.0, 0usize), |(s, n), &p| (s + p, n + 1));
        (n > 0).then(|| sum / n as f64)
    };
    let Some(abs_mean) = gated_mean(ABSOLUTE_GATE_LUFS) else {
        return Ok(f64::NEG_INFINITY);
    };
    let relative = loudness(abs_mean) + RELATIVE_GATE_LU;
    let threshold = if relative > ABSOLUTE_GATE_LUFS {
        relative
    } else {
        ABSOLUTE_GATE_LUFS
    };
    Ok(gated_mean(threshold).map_or(f64::NEG_INFINITY, loudness))
}

/// Result of [`mix_at_snr`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub samples: Vec<f64>,
    /// Linear gain applied to the noise stem.
    pub noise_gain: f64,
}

/// Scale `noise` so that the loudness difference speech minus noise equals
/// `snr_db`, then add it to `speech`.
pub fn mix_at_snr(speech: &[f64], noise: &[f64], snr_db: f64, sample_rate: u32) -> Result<Mixture, Error> {
    if speech.len() != noise.len() {
        return Err(Error::DimensionMismatch {
            expected: speech.len(),
            found: noise.len(),
        });
    }
    let ls = lufs(speech, sample_rate)?;
    let ln = lufs(noise, sample_rate)?;
    if !ls.is_finite() || !ln.is_finite() {
        return Err(Error::SilentSignal);
    }
    let noise_gain = libm::pow(10.0, (ls - ln - snr_db) / 20.0);
    let samples = speech
        .iter()
        .zip(noise)
        .map(|(&s, &n)| s + noise_gain * n)
        .collect();
    Ok(Mixture { samples, noise_gain })
}
