//! Signal processing around the mask network: STFT analysis and
//! resynthesis, mel projection with power-law compression and the QEQ input
//! affine, mask application, and loudness-based mixing.

mod fft;
pub mod loudness;
pub mod mel;
pub mod stft;

pub use fft::Fft;
pub use loudness::{lufs, mix_at_snr, Mixture};
pub use mel::{apply_mask, mel_features, MelFilterbank, QeqParams};
pub use stft::{istft, stft, Spectrogram, StftProcessor};

use crate::Error;

/// Analysis/synthesis window pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Window {
    /// Square root of the periodic Hann window on both sides. At 50%
    /// overlap the product window sums to exactly one.
    SqrtHann,
}

impl Window {
    pub fn code(self) -> u8 {
        match self {
            Window::SqrtHann => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Window::SqrtHann),
            _ => None,
        }
    }

    pub fn coefficients(self, n: usize) -> alloc::vec::Vec<f64> {
        match self {
            Window::SqrtHann => (0..n)
                .map(|i| {
                    let phase = 2.0 * core::f64::consts::PI * i as f64 / n as f64;
                    libm::sqrt(0.5 - 0.5 * libm::cos(phase))
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DspConfig {
    pub sample_rate: u32,
    pub frame_size: usize,
    pub hop_size: usize,
    pub mel_bins: usize,
    pub power_exponent: f64,
    pub window: Window,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            sample_rate: 16_000,
            frame_size: 512,
            hop_size: 256,
            mel_bins: 128,
            power_exponent: 0.3,
            window: Window::SqrtHann,
        }
    }
}

impl DspConfig {
    /// Number of STFT frequency bins, `frame_size / 2 + 1`.
    pub fn freq_bins(&self) -> usize {
        self.frame_size / 2 + 1
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive"));
        }
        if self.frame_size < 2 || !self.frame_size.is_power_of_two() {
            return Err(Error::InvalidConfig("frame size must be a power of two >= 2"));
        }
        if self.hop_size * 2 != self.frame_size {
            return Err(Error::InvalidConfig("hop size must be half the frame size"));
        }
        if self.mel_bins == 0 || self.mel_bins > self.freq_bins() {
            return Err(Error::InvalidConfig("mel bins must be in 1..=frame/2+1"));
        }
        if !(self.power_exponent > 0.0 && self.power_exponent <= 1.0) {
            return Err(Error::InvalidConfig("power exponent must be in (0, 1]"));
        }
        Ok(())
    }

    /// Hop duration in seconds; the per-frame compute deadline.
    pub fn hop_seconds(&self) -> f64 {
        self.hop_size as f64 / self.sample_rate as f64
    }

    pub fn frame_seconds(&self) -> f64 {
        self.frame_size as f64 / self.sample_rate as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let c = DspConfig::default();
        c.validate().unwrap();
        assert_eq!(c.freq_bins(), 257);
        assert_eq!(c.hop_seconds(), 0.016);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = DspConfig::default();
        for bad in [
            DspConfig { hop_size: 128, ..base },
            DspConfig { frame_size: 500, hop_size: 250, ..base },
            DspConfig { mel_bins: 300, ..base },
            DspConfig { power_exponent: 0.0, ..base },
            DspConfig { power_exponent: 1.5, ..base },
            DspConfig { sample_rate: 0, ..base },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn sqrt_hann_is_cola_at_half_overlap() {
        let n = 512;
        let w = Window::SqrtHann.coefficients(n);
        for i in 0..n / 2 {
            let s = w[i] * w[i] + w[i + n / 2] * w[i + n / 2];
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
