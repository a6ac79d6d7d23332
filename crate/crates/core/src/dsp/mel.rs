//! Mel projection, power-law compression, QEQ and mask application.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::Spectrogram;
use crate::Error;

/// Nonnegative `mel_bins x freq_bins` projection matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    mel_bins: usize,
    freq_bins: usize,
    weights: Vec<f32>,
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * libm::log10(1.0 + hz / 700.0)
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (libm::pow(10.0, mel / 2595.0) - 1.0)
}

impl MelFilterbank {
    /// Triangular filters equally spaced on the mel scale from 0 Hz to
    /// Nyquist, each peaking at 1.
    ///
    /// At low frequencies the mel spacing is finer than the FFT bin spacing,
    /// so a triangle can fall between two bins. Such a filter gets weight 1
    /// on the bin nearest its centre so that every row selects something.
    pub fn triangular(mel_bins: usize, frame_size: usize, sample_rate: u32) -> Result<Self, Error> {
        let freq_bins = frame_size / 2 + 1;
        if mel_bins == 0 || mel_bins > freq_bins {
            return Err(Error::InvalidConfig("mel bins must be in 1..=frame/2+1"));
        }
        let nyquist = sample_rate as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..mel_bins + 2)
            .map(|i| mel_to_hz(top * i as f64 / (mel_bins + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / frame_size as f64;
        let mut weights = vec![0.0f32; mel_bins * freq_bins];
        for m in 0..mel_bins {
            let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let row = &mut weights[m * freq_bins..(m + 1) * freq_bins];
            for (f, w) in row.iter_mut().enumerate() {
                let hz = f as f64 * bin_hz;
                let v = if hz > lo && hz <= centre {
                    (hz - lo) / (centre - lo)
                } else if hz > centre && hz < hi {
                    (hi - hz) / (hi - centre)
                } else {
                    0.0
                };
                *w = v as f32;
            }
            if row.iter().all(|&w| w == 0.0) {
                let nearest = libm::round(centre / bin_hz) as usize;
                row[nearest.min(freq_bins - 1)] = 1.0;
            }
        }
        Ok(MelFilterbank {
            mel_bins,
            freq_bins,
            weights,
        })
    }

    /// Validate and wrap an explicit matrix.
    pub fn from_weights(mel_bins: usize, freq_bins: usize, weights: Vec<f32>) -> Result<Self, Error> {
        if weights.len() != mel_bins * freq_bins {
            return Err(Error::ShapeMismatch {
                expected: mel_bins * freq_bins,
                found: weights.len(),
            });
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidConfig("filterbank weights must be finite and nonnegative"));
        }
        for row in weights.chunks(freq_bins.max(1)) {
            let first = row.iter().position(|&w| w > 0.0);
            let last = row.iter().rposition(|&w| w > 0.0);
            match (first, last) {
                (Some(a), Some(b)) if row[a..=b].iter().all(|&w| w > 0.0) => {}
                (Some(_), Some(_)) => {
                    return Err(Error::InvalidConfig("filterbank row support is not contiguous"))
                }
                _ => return Err(Error::InvalidConfig("filterbank row is empty")),
            }
        }
        Ok(MelFilterbank {
            mel_bins,
            freq_bins,
            weights,
        })
    }

    pub fn mel_bins(&self) -> usize {
        self.mel_bins
    }

    pub fn freq_bins(&self) -> usize {
        self.freq_bins
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn row(&self, m: usize) -> &[f32] {
        &self.weights[m * self.freq_bins..(m + 1) * self.freq_bins]
    }

    /// `G x` for one frame of magnitudes.
    pub fn project(&self, magnitudes: &[f64], out: &mut [f64]) {
        for (m, o) in out.iter_mut().enumerate() {
            *o = self
                .row(m)
                .iter()
                .zip(magnitudes)
                .map(|(&w, &x)| w as f64 * x)
                .sum();
        }
    }

    /// `G^T m` for one frame of mel gains.
    pub fn expand(&self, mel: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (m, &g) in mel.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.row(m)) {
                *o += w as f64 * g;
            }
        }
    }

    /// Sum of each column (the frequency gain of an all-ones mel mask).
    pub fn column_sums(&self) -> Vec<f64> {
        let ones = vec![1.0; self.mel_bins];
        let mut out = vec![0.0; self.freq_bins];
        self.expand(&ones, &mut out);
        out
    }
}

/// Per-feature gain and bias applied after power-law compression.
#[derive(Debug, Clone, PartialEq)]
pub struct QeqParams {
    pub gain: Vec<f32>,
    pub bias: Vec<f32>,
}

impl QeqParams {
    pub fn identity(n: usize) -> Self {
        QeqParams {
            gain: vec![1.0; n],
            bias: vec![0.0; n],
        }
    }

    pub fn new(gain: Vec<f32>, bias: Vec<f32>) -> Result<Self, Error> {
        if gain.len() != bias.len() {
            return Err(Error::DimensionMismatch {
                expected: gain.len(),
                found: bias.len(),
            });
        }
        if gain.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("QEQ parameters must be finite"));
        }
        Ok(QeqParams { gain, bias })
    }

    pub fn len(&self) -> usize {
        self.gain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gain.is_empty()
    }
}

/// `g * (G |Y|)^p + b` for one frame. Values are not clamped here.
pub fn frame_features(
    bins: &[Complex64],
    fb: &MelFilterbank,
    qeq: &QeqParams,
    power: f64,
    magnitude_scratch: &mut [f64],
    out: &mut [f64],
) {
    for (m, b) in magnitude_scratch.iter_mut().zip(bins) {
        *m = b.norm();
    }
    fb.project(magnitude_scratch, out);
    for ((o, &g), &b) in out.iter_mut().zip(&qeq.gain).zip(&qeq.bias) {
        *o = g as f64 * libm::pow(*o, power) + b as f64;
    }
}

/// Mel features for a whole spectrogram, row major `mel_bins x frames`.
pub fn mel_features(
    spec: &Spectrogram,
    fb: &MelFilterbank,
    qeq: &QeqParams,
    power: f64,
) -> Result<Vec<f64>, Error> {
    if spec.bins() != fb.freq_bins() {
        return Err(Error::DimensionMismatch {
            expected: fb.freq_bins(),
            found: spec.bins(),
        });
    }
    if qeq.len() != fb.mel_bins() {
        return Err(Error::DimensionMismatch {
            expected: fb.mel_bins(),
            found: qeq.len(),
        });
    }
    let frames = spec.frames();
    let mut out = vec![0.0; fb.mel_bins() * frames];
    let mut mags = vec![0.0; spec.bins()];
    let mut col = vec![0.0; fb.mel_bins()];
    for t in 0..frames {
        frame_features(spec.frame(t), fb, qeq, power, &mut mags, &mut col);
        for (m, &v) in col.iter().enumerate() {
            out[m * frames + t] = v;
        }
    }
    Ok(out)
}

/// Scale each bin of one frame by `G^T mask`; phase is untouched.
pub fn apply_mask_frame(bins: &mut [Complex64], mask: &[f64], fb: &MelFilterbank, gain_scratch: &mut [f64]) {
    fb.expand(mask, gain_scratch);
    for (b, &g) in bins.iter_mut().zip(gain_scratch.iter()) {
        *b *= g;
    }
}

/// Apply a row-major `mel_bins x frames` mask to a spectrogram.
pub fn apply_mask(mask: &[f64], spec: &Spectrogram, fb: &MelFilterbank) -> Result<Spectrogram, Error> {
    let frames = spec.frames();
    if spec.bins() != fb.freq_bins() {
        return Err(Error::DimensionMismatch {
            expected: fb.freq_bins(),
            found: spec.bins(),
        });
    }
    if mask.len() != fb.mel_bins() * frames {
        return Err(Error::DimensionMismatch {
            expected: fb.mel_bins() * frames,
            found: mask.len(),
        });
    }
    let mut out = spec.clone();
    let mut col = vec![0.0; fb.mel_bins()];
    let mut gains = vec![0.0; fb.freq_bins()];
    for t in 0..frames {
        for (m, c) in col.iter_mut().enumerate() {
            *c = mask[m * frames + t];
        }
        apply_mask_frame(out.frame_mut(t), &col, fb, &mut gains);
    }
    Ok(out)
}
