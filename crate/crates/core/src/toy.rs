//! Reproducible random models for tests, benchmarks and demos.

use rand::Rng;

use crate::dsp::{DspConfig, QeqParams};
use crate::engine::{ModelDims, SeModel};
use crate::quant::{quantize, QuantFormat};
use crate::sparse::{DenseMatrix, LayerMatrix};
use crate::Error;

/// Small dimensions that run the full code path quickly.
pub const TOY_DIMS: ModelDims = ModelDims {
    mel_bins: 16,
    lstm_hidden: [16, 16],
    dense_hidden: 16,
};

fn matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, fmt: QuantFormat) -> LayerMatrix {
    let scale = 1.5 / libm::sqrt(cols as f64);
    let data = (0..rows * cols)
        .map(|_| quantize(rng.gen_range(-scale..scale), fmt) as i16)
        .collect();
    LayerMatrix::Dense(DenseMatrix::new(rows, cols, fmt, data).expect("codes in range"))
}

fn bias<R: Rng + ?Sized>(rng: &mut R, n: usize, fmt: QuantFormat) -> alloc::vec::Vec<i16> {
    (0..n).map(|_| quantize(rng.gen_range(-0.25..0.25), fmt) as i16).collect()
}

/// Random dense model with the default filterbank and a QEQ that maps
/// typical speech-level features into `[-1, 1]`.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, dims: ModelDims, dsp: DspConfig) -> Result<SeModel, Error> {
    let mut m = SeModel::zeros(dsp, dims)?;
    for layer in m.lstm.iter_mut() {
        let (h, i) = (layer.hidden_size, layer.input_size);
        for g in 0..4 {
            layer.w_x[g] = matrix(rng, h, i, crate::Q8);
            layer.w_h[g] = matrix(rng, h, h, crate::Q8);
            layer.bias[g] = bias(rng, h, crate::Q8);
        }
    }
    for layer in m.dense.iter_mut() {
        let fmt = layer.format();
        let (o, i) = (layer.outputs(), layer.inputs());
        layer.weights = matrix(rng, o, i, fmt);
        layer.bias = bias(rng, o, fmt);
    }
    let n = dims.mel_bins;
    m.qeq = QeqParams::new(
        (0..n).map(|_| rng.gen_range(0.1f32..0.5)).collect(),
        (0..n).map(|_| rng.gen_range(-0.6f32..0.0)).collect(),
    )?;
    m.validate()?;
    Ok(m)
}

/// A fixed-mask model that keeps the mel bands whose peak lies in
/// `[low_hz, high_hz]` and suppresses the rest.
///
/// Both LSTM layers are zero, every dense-1 unit outputs `tanh(0.99)`, and
/// each mask logit is `+-0.99` times the sum of those outputs, which
/// saturates the sigmoid for any non-trivial hidden width.
pub fn band_pass_model(dims: ModelDims, dsp: DspConfig, low_hz: f64, high_hz: f64) -> Result<SeModel, Error> {
    let mut m = SeModel::zeros(dsp, dims)?;
    let d = dims.dense_hidden;
    m.dense[0].bias = alloc::vec![quantize(0.99, crate::Q8) as i16; d];
    let bin_hz = m.dsp.sample_rate as f64 / m.dsp.frame_size as f64;
    let mut w = alloc::vec::Vec::with_capacity(dims.mel_bins * d);
    for k in 0..dims.mel_bins {
        let row = m.filterbank.row(k);
        let peak = (0..row.len()).fold(0, |best, i| if row[i] > row[best] { i } else { best });
        let hz = peak as f64 * bin_hz;
        let sign = if (low_hz..=high_hz).contains(&hz) { 0.99 } else { -0.99 };
        w.extend(core::iter::repeat_n(quantize(sign, crate::Q16) as i16, d));
    }
    m.dense[1].weights = LayerMatrix::Dense(DenseMatrix::new(dims.mel_bins, d, crate::Q16, w)?);
    m.validate()?;
    Ok(m)
}
