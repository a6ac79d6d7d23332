//! Separation metrics and the selection score.

use num_complex::Complex64;

use crate::dsp::Spectrogram;
use crate::Error;

/// Magnitude bound for SI-SDR and SDR, reached by exact matches.
pub const SI_SDR_CAP_DB: f64 = 100.0;

/// Compression exponent of the PSA loss.
pub const PSA_EXPONENT: f64 = 0.3;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_pair(reference: &[f64], estimate: &[f64]) -> Result<f64, Error> {
    if reference.len() != estimate.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            found: estimate.len(),
        });
    }
    if reference.is_empty() {
        return Err(Error::EmptyInput);
    }
    let energy = dot(reference, reference);
    if energy == 0.0 {
        return Err(Error::SilentSignal);
    }
    Ok(energy)
}

fn ratio_db(signal: f64, noise: f64) -> f64 {
    if noise == 0.0 {
        return SI_SDR_CAP_DB;
    }
    if signal == 0.0 {
        return -SI_SDR_CAP_DB;
    }
    (10.0 * libm::log10(signal / noise)).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB)
}

/// Scale-invariant SDR in dB, clamped to `[-100, 100]`.
pub fn si_sdr(reference: &[f64], estimate: &[f64]) -> Result<f64, Error> {
    let energy = check_pair(reference, estimate)?;
    let alpha = dot(estimate, reference) / energy;
    let (mut target, mut noise) = (0.0, 0.0);
    for (&s, &e) in reference.iter().zip(estimate) {
        let t = alpha * s;
        target += t * t;
        noise += (t - e) * (t - e);
    }
    Ok(ratio_db(target, noise))
}

/// Plain SDR in dB without a scale projection, clamped to `[-100, 100]`.
pub fn sdr(reference: &[f64], estimate: &[f64]) -> Result<f64, Error> {
    let energy = check_pair(reference, estimate)?;
    let noise: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(&s, &e)| (s - e) * (s - e))
        .sum();
    Ok(ratio_db(energy, noise))
}

fn compress(z: Complex64) -> Complex64 {
    let m = z.norm();
    if m == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    z * (libm::pow(m, PSA_EXPONENT) / m)
}

/// Phase-sensitive spectral approximation loss:
/// `0.1 * || |X|^p - |Y|^p || + 0.9 * || X^p - Y^p ||` with `p = 0.3`,
/// Frobenius norms over all bins and frames, and `Z^p = |Z|^p e^{i arg Z}`.
pub fn psa_loss(clean: &Spectrogram, estimate: &Spectrogram) -> Result<f64, Error> {
    if clean.bins() != estimate.bins() || clean.frames() != estimate.frames() {
        return Err(Error::ShapeMismatch {
            expected: clean.as_slice().len(),
            found: estimate.as_slice().len(),
        });
    }
    let (mut mag, mut cpx) = (0.0, 0.0);
    for (&x, &y) in clean.as_slice().iter().zip(estimate.as_slice()) {
        let (cx, cy) = (compress(x), compress(y));
        let d = cx.norm() - cy.norm();
        mag += d * d;
        cpx += (cx - cy).norm_sqr();
    }
    Ok(0.1 * libm::sqrt(mag) + 0.9 * libm::sqrt(cpx))
}

/// `0.1 * STOI + 0.2 * PESQ + 0.6 * SI-SDR`.
pub fn q_score(stoi: f64, pesq: f64, si_sdr: f64) -> f64 {
    0.1 * stoi + 0.2 * pesq + 0.6 * si_sdr
}

/// How a Q score was formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QMode {
    /// All three metrics were available.
    Full,
    /// STOI or PESQ was missing; only the `0.6 * SI-SDR` term is used.
    SiSdrOnly,
}

impl QMode {
    pub fn name(self) -> &'static str {
        match self {
            QMode::Full => "full",
            QMode::SiSdrOnly => "si-sdr-only",
        }
    }
}

/// Metric triple of one evaluated model. STOI and PESQ come from external
/// tools and may be absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub stoi: Option<f64>,
    pub pesq: Option<f64>,
    pub si_sdr: f64,
}

impl Metrics {
    pub fn si_sdr_only(si_sdr: f64) -> Self {
        Metrics {
            stoi: None,
            pesq: None,
            si_sdr,
        }
    }

    pub fn mode(&self) -> QMode {
        match (self.stoi, self.pesq) {
            (Some(_), Some(_)) => QMode::Full,
            _ => QMode::SiSdrOnly,
        }
    }

    pub fn q(&self) -> f64 {
        match (self.stoi, self.pesq) {
            (Some(s), Some(p)) => q_score(s, p, self.si_sdr),
            _ => q_score(0.0, 0.0, self.si_sdr),
        }
    }
}
