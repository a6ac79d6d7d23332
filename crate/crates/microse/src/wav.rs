//! Mono WAV input and 16-bit PCM output.

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum WavError {
    #[error("cannot read or write WAV: {0}")]
    Hound(#[from] hound::Error),
    #[error("expected a mono file, found {0} channels")]
    NotMono(u16),
    #[error("unsupported sample format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub sample_rate: u32,
    /// Samples in `[-1, 1]`.
    pub samples: Vec<f64>,
}

pub fn read(path: &Path) -> Result<Audio, WavError> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    if spec.channels != 1 {
        return Err(WavError::NotMono(spec.channels));
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, bits @ 8..=32) => {
            let scale = (1i64 << (bits - 1)) as f64;
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()?
        }
        (hound::SampleFormat::Float, 32) => r
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()?,
        (f, b) => return Err(WavError::Format(format!("{f:?} at {b} bits"))),
    };
    Ok(Audio {
        sample_rate: spec.sample_rate,
        samples,
    })
}

/// Round to the nearest 16-bit code, saturating.
pub fn to_pcm16(x: f64) -> i16 {
    (x * 32768.0).round_ties_even().clamp(-32768.0, 32767.0) as i16
}

pub fn write(path: &Path, audio: &Audio) -> Result<(), WavError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in &audio.samples {
        w.write_sample(to_pcm16(s))?;
    }
    w.finalize()?;
    Ok(())
}
