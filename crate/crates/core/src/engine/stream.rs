//! Streaming enhancement: framing, mask prediction and overlap-add.
//!
//! Samples are consumed one hop at a time. The analysis buffer starts with
//! `frame - hop` zeros, so frame `t` covers input samples
//! `[t*hop - hop, t*hop + hop)`. After each frame the first `hop` samples of
//! the overlap-add accumulator are complete and are emitted; emitted sample
//! `k` therefore reconstructs input sample `k - hop`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::activation::ActivationTables;
use super::model::SeModel;
use super::network::{forward_frame, NetworkScratch, NetworkState};
use crate::dsp::mel::{apply_mask_frame, frame_features};
use crate::dsp::StftProcessor;
use crate::quant::{dequantize, quantize, QuantTensor, Q16, Q8};
use crate::Error;

/// Everything that carries over from one frame to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancerState {
    pub network: NetworkState,
    /// Last `frame_size` input samples; the newest hop is still filling.
    pub input: Vec<f64>,
    /// New samples written since the last frame.
    pub pending: usize,
    /// Overlap-add accumulator, `frame_size` long.
    pub overlap: Vec<f64>,
}

impl EnhancerState {
    pub fn new(model: &SeModel) -> Self {
        EnhancerState {
            network: NetworkState::new(model),
            input: vec![0.0; model.dsp.frame_size],
            pending: 0,
            overlap: vec![0.0; model.dsp.frame_size],
        }
    }

    pub fn reset(&mut self) {
        self.network.reset();
        self.input.fill(0.0);
        self.pending = 0;
        self.overlap.fill(0.0);
    }
}

/// A single-stream enhancer borrowing an immutable model.
#[derive(Debug, Clone)]
pub struct Enhancer<'m> {
    model: &'m SeModel,
    tables: ActivationTables,
    state: EnhancerState,
    stft: StftProcessor,
    bins: Vec<Complex64>,
    mags: Vec<f64>,
    feats: Vec<f64>,
    feats_q: Vec<i16>,
    mask_q: Vec<i16>,
    mask: Vec<f64>,
    gains: Vec<f64>,
    frame_out: Vec<f64>,
    net: NetworkScratch,
    frames: u64,
}

impl<'m> Enhancer<'m> {
    pub fn new(model: &'m SeModel) -> Result<Self, Error> {
        model.validate()?;
        let dsp = &model.dsp;
        Ok(Enhancer {
            model,
            tables: ActivationTables::new(),
            state: EnhancerState::new(model),
            stft: StftProcessor::new(dsp),
            bins: vec![Complex64::new(0.0, 0.0); dsp.freq_bins()],
            mags: vec![0.0; dsp.freq_bins()],
            feats: vec![0.0; dsp.mel_bins],
            feats_q: vec![0; dsp.mel_bins],
            mask_q: vec![0; dsp.mel_bins],
            mask: vec![0.0; dsp.mel_bins],
            gains: vec![0.0; dsp.freq_bins()],
            frame_out: vec![0.0; dsp.frame_size],
            net: NetworkScratch::default(),
            frames: 0,
        })
    }

    pub fn model(&self) -> &SeModel {
        self.model
    }

    pub fn state(&self) -> &EnhancerState {
        &self.state
    }

    pub fn tables(&self) -> &ActivationTables {
        &self.tables
    }

    /// Frames processed since construction or the last reset.
    pub fn frames(&self) -> u64 {
        self.frames
    }

    /// Delay in samples between an input sample and its emitted output.
    pub fn latency(&self) -> usize {
        self.model.dsp.hop_size
    }

    pub fn reset(&mut self) {
        self.state.reset();
        self.frames = 0;
    }

    /// Predict the mel mask for one frame of Q8 features, advancing the
    /// recurrent state. Mask values are in `[0, 1]`.
    pub fn predict_mask_frame(&mut self, features: &QuantTensor) -> Result<Vec<f64>, Error> {
        if features.format() != Q8 {
            return Err(Error::InvalidConfig("features must be Q8"));
        }
        forward_frame(
            self.model,
            &self.tables,
            &mut self.state.network,
            features.data(),
            &mut self.net,
            &mut self.mask_q,
        )?;
        Ok(self.mask_q.iter().map(|&m| dequantize(m as i32, Q16)).collect())
    }

    /// Push samples; every completed hop of output is appended to `out`.
    pub fn process(&mut self, input: &[f64], out: &mut Vec<f64>) {
        let hop = self.model.dsp.hop_size;
        let base = self.model.dsp.frame_size - hop;
        let mut rest = input;
        while !rest.is_empty() {
            let take = (hop - self.state.pending).min(rest.len());
            let at = base + self.state.pending;
            self.state.input[at..at + take].copy_from_slice(&rest[..take]);
            self.state.pending += take;
            rest = &rest[take..];
            if self.state.pending == hop {
                self.run_frame(out);
            }
        }
    }

    /// Pad with zeros until every sample pushed so far has been emitted.
    pub fn finish(&mut self, out: &mut Vec<f64>) {
        let hop = self.model.dsp.hop_size;
        let pad = if self.state.pending == 0 {
            hop
        } else {
            2 * hop - self.state.pending
        };
        self.process(&vec![0.0; pad], out);
    }

    fn run_frame(&mut self, out: &mut Vec<f64>) {
        let model = self.model;
        let hop = model.dsp.hop_size;
        let frame = model.dsp.frame_size;
        self.stft.analyze(&self.state.input, &mut self.bins);
        frame_features(
            &self.bins,
            &model.filterbank,
            &model.qeq,
            model.dsp.power_exponent,
            &mut self.mags,
            &mut self.feats,
        );
        for (q, &f) in self.feats_q.iter_mut().zip(&self.feats) {
            *q = quantize(f.clamp(-1.0, 1.0), Q8) as i16;
        }
        forward_frame(
            model,
            &self.tables,
            &mut self.state.network,
            &self.feats_q,
            &mut self.net,
            &mut self.mask_q,
        )
        .expect("model validated at construction");
        for (m, &q) in self.mask.iter_mut().zip(&self.mask_q) {
            *m = dequantize(q as i32, Q16);
        }
        apply_mask_frame(&mut self.bins, &self.mask, &model.filterbank, &mut self.gains);
        self.stft.synthesize(&self.bins, &mut self.frame_out);
        for (o, &v) in self.state.overlap.iter_mut().zip(&self.frame_out) {
            *o += v;
        }
        out.extend_from_slice(&self.state.overlap[..hop]);
        self.state.overlap.copy_within(hop.., 0);
        self.state.overlap[frame - hop..].fill(0.0);
        self.state.input.copy_within(hop.., 0);
        self.state.pending = 0;
        self.frames += 1;
    }
}

/// Enhance a whole signal. The output is time-aligned with the input and
/// has the same length; it is bit-identical to feeding the same samples to
/// an [`Enhancer`] in any chunking, calling `finish`, and dropping the first
/// `latency()` samples.
pub fn enhance(model: &SeModel, noisy: &[f64], sample_rate: u32) -> Result<Vec<f64>, Error> {
    if sample_rate != model.dsp.sample_rate {
        return Err(Error::SampleRateMismatch {
            model: model.dsp.sample_rate,
            input: sample_rate,
        });
    }
    if noisy.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut e = Enhancer::new(model)?;
    let mut out = Vec::with_capacity(noisy.len() + 2 * model.dsp.frame_size);
    e.process(noisy, &mut out);
    e.finish(&mut out);
    let delay = e.latency();
    Ok(out[delay..delay + noisy.len()].to_vec())
}

/// Multiply-accumulate count of one frame of inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameOps {
    /// MACs in the weight matrix products, after sparsity.
    pub matvec: usize,
    /// Cell and hidden updates: three multiplies per live LSTM unit.
    pub elementwise: usize,
}

impl FrameOps {
    pub fn total(&self) -> usize {
        self.matvec + self.elementwise
    }
}

/// Executed MACs per frame. Stored blocks count a full block each, unit
/// encodings count only kept rows times kept columns, and unstructured
/// encodings count stored weights.
pub fn ops_per_frame(model: &SeModel) -> FrameOps {
    let mut ops = FrameOps::default();
    for layer in &model.lstm {
        ops.matvec += layer.matrices().map(|m| m.macs()).sum::<usize>();
        let live = match layer.w_x[0].structure() {
            Some(crate::sparse::SparsityStructure::Unit) => {
                let mut alive = vec![false; layer.hidden_size];
                for m in layer.matrices() {
                    if let crate::sparse::LayerMatrix::Sparse(s) = m {
                        for &r in s.kept_rows().unwrap_or(&[]) {
                            alive[r as usize] = true;
                        }
                    }
                }
                alive.iter().filter(|&&a| a).count()
            }
            _ => layer.hidden_size,
        };
        ops.elementwise += 3 * live;
    }
    for layer in &model.dense {
        ops.matvec += layer.weights.macs();
    }
    ops
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::si_sdr;
    use crate::compression::{prune_layer, prune_model, SparsityPlan};
    use crate::dsp::DspConfig;
    use crate::engine::{LayerId, ModelDims};
    use crate::sparse::{LayerMatrix, SparseMatrix, SparsityStructure};
    use crate::toy::{band_pass_model, random_model, TOY_DIMS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_dsp() -> DspConfig {
        DspConfig {
            frame_size: 64,
            hop_size: 32,
            ..DspConfig::default()
        }
    }

    fn audio(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-0.8..0.8)).collect()
    }

    fn streamed(model: &SeModel, x: &[f64], chunk: usize) -> Vec<f64> {
        let mut e = Enhancer::new(model).unwrap();
        let mut out = Vec::new();
        for c in x.chunks(chunk) {
            e.process(c, &mut out);
        }
        e.finish(&mut out);
        out[e.latency()..e.latency() + x.len()].to_vec()
    }

    #[test]
    fn zero_model_predicts_one_half() {
        let m = SeModel::zeros(small_dsp(), TOY_DIMS).unwrap();
        let mut e = Enhancer::new(&m).unwrap();
        let feats = QuantTensor::from_f64(&[0.3; 16], vec![16], Q8).unwrap();
        for _ in 0..3 {
            assert!(e.predict_mask_frame(&feats).unwrap().iter().all(|&v| v == 0.5));
        }
        let wrong = QuantTensor::from_f64(&[0.3; 15], vec![15], Q8).unwrap();
        assert!(e.predict_mask_frame(&wrong).is_err());
    }

    #[test]
    fn masks_stay_in_unit_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_model(&mut rng, TOY_DIMS, small_dsp()).unwrap();
        let mut e = Enhancer::new(&m).unwrap();
        for _ in 0..50 {
            let f: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let q = QuantTensor::from_f64(&f, vec![16], Q8).unwrap();
            assert!(e.predict_mask_frame(&q).unwrap().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn silence_in_silence_out() {
        let m = random_model(&mut ChaCha8Rng::seed_from_u64(2), TOY_DIMS, small_dsp()).unwrap();
        let out = enhance(&m, &[0.0; 777], 16_000).unwrap();
        assert_eq!(out.len(), 777);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn chunked_streaming_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let m = random_model(&mut rng, TOY_DIMS, DspConfig::default()).unwrap();
            let n = rng.gen_range(1..5000);
            let x = audio(&mut rng, n);
            let one = enhance(&m, &x, 16_000).unwrap();
            for chunk in [1, 160, 256, 4096] {
                assert_eq!(streamed(&m, &x, chunk), one, "chunk {chunk}");
            }
        }
    }

    #[test]
    fn split_input_reaches_the_concatenated_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_model(&mut rng, TOY_DIMS, small_dsp()).unwrap();
        let (a, b) = (audio(&mut rng, 100), audio(&mut rng, 77));
        let mut split = Enhancer::new(&m).unwrap();
        let mut out_split = Vec::new();
        split.process(&a, &mut out_split);
        split.process(&b, &mut out_split);
        let mut joined = Enhancer::new(&m).unwrap();
        let mut out_joined = Vec::new();
        joined.process(&[a, b].concat(), &mut out_joined);
        assert_eq!(split.state(), joined.state());
        assert_eq!(out_split, out_joined);
    }

    #[test]
    fn reset_matches_a_fresh_engine() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_model(&mut rng, TOY_DIMS, small_dsp()).unwrap();
        let (a, b) = (audio(&mut rng, 300), audio(&mut rng, 300));
        let mut used = Enhancer::new(&m).unwrap();
        let mut sink = Vec::new();
        used.process(&a, &mut sink);
        used.reset();
        assert_eq!(used.state(), &EnhancerState::new(&m));
        let mut out_used = Vec::new();
        used.process(&b, &mut out_used);
        let mut fresh = Enhancer::new(&m).unwrap();
        let mut out_fresh = Vec::new();
        fresh.process(&b, &mut out_fresh);
        assert_eq!(out_used, out_fresh);
    }

    #[test]
    fn enhance_errors() {
        let m = SeModel::zeros(small_dsp(), TOY_DIMS).unwrap();
        assert_eq!(
            enhance(&m, &[0.1; 10], 8_000),
            Err(Error::SampleRateMismatch {
                model: 16_000,
                input: 8_000
            })
        );
        assert_eq!(enhance(&m, &[], 16_000), Err(Error::EmptyInput));
    }

    #[test]
    fn dense_ops_are_layer_products() {
        let m = SeModel::zeros(DspConfig::default(), ModelDims::FULL).unwrap();
        let ops = ops_per_frame(&m);
        let expected = 4 * 256 * (128 + 256) + 4 * 256 * (256 + 256) + 128 * 256 + 128 * 128;
        assert_eq!(ops.matvec, expected);
        assert_eq!(ops.elementwise, 3 * 512);
        assert!(ops.total() > 900_000 && ops.total() < 1_100_000);
    }

    #[test]
    fn half_block_pruned_layer_halves_its_macs() {
        let m = random_model(&mut ChaCha8Rng::seed_from_u64(6), TOY_DIMS, small_dsp()).unwrap();
        let mask = prune_layer(&m, LayerId::Dense1, SparsityStructure::block(), 0.5).unwrap();
        let mut p = m.clone();
        p.dense[0].weights = LayerMatrix::Sparse(
            SparseMatrix::encode(&m.dense[0].weights.to_dense_tensor(), &mask.matrices[0], SparsityStructure::block())
                .unwrap(),
        );
        assert_eq!(p.dense[0].weights.macs() * 2, m.dense[0].weights.macs());
        assert_eq!(
            ops_per_frame(&m).matvec - ops_per_frame(&p).matvec,
            m.dense[0].weights.macs() / 2
        );
    }

    #[test]
    fn unit_pruned_macs_scale_with_kept_units() {
        let m = random_model(&mut ChaCha8Rng::seed_from_u64(7), TOY_DIMS, small_dsp()).unwrap();
        // 4 of 16 LSTM-1 units removed: k/n = 3/4.
        let (p, _) = prune_model(&m, &SparsityPlan::new(SparsityStructure::Unit, vec![250, 0, 0, 0])).unwrap();
        let x: usize = p.lstm[0].w_x.iter().map(|w| w.macs()).sum();
        let h: usize = p.lstm[0].w_h.iter().map(|w| w.macs()).sum();
        assert_eq!(x * 4, 4 * 16 * 16 * 3);
        assert_eq!(h * 16, 4 * 16 * 16 * 9);
        let next: usize = p.lstm[1].w_x.iter().map(|w| w.macs()).sum();
        assert_eq!(next * 4, 4 * 16 * 16 * 3);
        assert_eq!(ops_per_frame(&p).elementwise, 3 * (12 + 16));
    }

    #[test]
    fn band_pass_toy_improves_si_sdr_on_tone_in_noise() {
        let dims = ModelDims {
            mel_bins: 32,
            lstm_hidden: [8, 8],
            dense_hidden: 16,
        };
        let m = band_pass_model(dims, DspConfig { mel_bins: 32, ..DspConfig::default() }, 300.0, 700.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 16_000;
        let clean: Vec<f64> = (0..n)
            .map(|i| 0.5 * libm::sin(2.0 * core::f64::consts::PI * 500.0 * i as f64 / 16_000.0))
            .collect();
        let noisy: Vec<f64> = clean.iter().map(|&c| c + rng.gen_range(-0.4..0.4)).collect();
        let out = enhance(&m, &noisy, 16_000).unwrap();
        let before = si_sdr(&clean, &noisy).unwrap();
        let after = si_sdr(&clean, &out).unwrap();
        assert!(after > before, "{before} -> {after}");
    }
}
