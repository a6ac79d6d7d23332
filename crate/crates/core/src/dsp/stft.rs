//! Short-time Fourier transform with weighted overlap-add resynthesis.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::{DspConfig, Fft};
use crate::Error;

/// Complex STFT, `freq_bins x frames`, stored frame by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    bins: usize,
    data: Vec<Complex64>,
}

impl Spectrogram {
    pub fn zeros(bins: usize, frames: usize) -> Self {
        Spectrogram {
            bins,
            data: vec![Complex64::new(0.0, 0.0); bins * frames],
        }
    }

    pub fn from_frames(bins: usize, data: Vec<Complex64>) -> Result<Self, Error> {
        if bins == 0 || !data.len().is_multiple_of(bins) {
            return Err(Error::ShapeMismatch {
                expected: bins,
                found: data.len(),
            });
        }
        Ok(Spectrogram { bins, data })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.data.len() / self.bins
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex64] {
        &mut self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn get(&self, f: usize, t: usize) -> Complex64 {
        self.data[t * self.bins + f]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }
}

/// Per-frame analysis and synthesis, shared by the batch transforms and the
/// streaming enhancer so both run the same arithmetic.
#[derive(Debug, Clone)]
pub struct StftProcessor {
    fft: Fft,
    window: Vec<f64>,
    scratch: Vec<Complex64>,
}

impl StftProcessor {
    pub fn new(config: &DspConfig) -> Self {
        StftProcessor {
            fft: Fft::new(config.frame_size),
            window: config.window.coefficients(config.frame_size),
            scratch: vec![Complex64::new(0.0, 0.0); config.frame_size],
        }
    }

    pub fn frame_size(&self) -> usize {
        self.window.len()
    }

    pub fn bins(&self) -> usize {
        self.window.len() / 2 + 1
    }

    /// Window and transform one frame; writes `frame_size / 2 + 1` bins.
    pub fn analyze(&mut self, frame: &[f64], out: &mut [Complex64]) {
        for ((s, &x), &w) in self.scratch.iter_mut().zip(frame).zip(&self.window) {
            *s = Complex64::new(x * w, 0.0);
        }
        self.fft.forward(&mut self.scratch);
        out.copy_from_slice(&self.scratch[..out.len()]);
    }

    /// Inverse transform a half spectrum and apply the synthesis window.
    pub fn synthesize(&mut self, bins: &[Complex64], out: &mut [f64]) {
        let n = self.window.len();
        self.scratch[..bins.len()].copy_from_slice(bins);
        // Rebuild the Hermitian upper half; DC and Nyquist must be real.
        self.scratch[0].im = 0.0;
        self.scratch[n / 2].im = 0.0;
        for k in 1..n / 2 {
            self.scratch[n - k] = bins[k].conj();
        }
        self.fft.inverse(&mut self.scratch);
        for ((o, s), &w) in out.iter_mut().zip(&self.scratch).zip(&self.window) {
            *o = s.re * w;
        }
    }
}

/// Frames start at `t * hop` for every full frame inside the signal.
pub fn stft(signal: &[f64], config: &DspConfig) -> Result<Spectrogram, Error> {
    config.validate()?;
    let n = config.frame_size;
    if signal.len() < n {
        return Err(Error::SignalTooShort {
            needed: n,
            found: signal.len(),
        });
    }
    let frames = 1 + (signal.len() - n) / config.hop_size;
    let mut proc = StftProcessor::new(config);
    let mut spec = Spectrogram::zeros(config.freq_bins(), frames);
    for t in 0..frames {
        let start = t * config.hop_size;
        proc.analyze(&signal[start..start + n], spec.frame_mut(t));
    }
    Ok(spec)
}

/// Overlap-add resynthesis; the output has `frame + (frames - 1) * hop`
/// samples. Samples covered by two frames reconstruct exactly.
pub fn istft(spec: &Spectrogram, config: &DspConfig) -> Result<Vec<f64>, Error> {
    config.validate()?;
    if spec.bins() != config.freq_bins() {
        return Err(Error::DimensionMismatch {
            expected: config.freq_bins(),
            found: spec.bins(),
        });
    }
    let n = config.frame_size;
    let frames = spec.frames();
    if frames == 0 {
        return Ok(Vec::new());
    }
    let mut out = vec![0.0; n + (frames - 1) * config.hop_size];
    let mut proc = StftProcessor::new(config);
    let mut buf = vec![0.0; n];
    for t in 0..frames {
        proc.synthesize(spec.frame(t), &mut buf);
        let start = t * config.hop_size;
        for (o, &b) in out[start..start + n].iter_mut().zip(&buf) {
            *o += b;
        }
    }
    Ok(out)
}
