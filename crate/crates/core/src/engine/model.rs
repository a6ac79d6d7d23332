//! Network description: two LSTM layers followed by two dense layers.

use alloc::vec::Vec;

use crate::dsp::{DspConfig, MelFilterbank, QeqParams};
use crate::quant::{QuantFormat, Q16, Q8};
use crate::sparse::{DenseMatrix, LayerMatrix, SparsityStructure};
use crate::Error;

/// LSTM gate order used for every per-gate array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Gate {
    Input,
    Forget,
    Output,
    Cell,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Cell];

    pub fn name(self) -> &'static str {
        match self {
            Gate::Input => "i",
            Gate::Forget => "f",
            Gate::Output => "o",
            Gate::Cell => "c",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LstmLayer {
    pub input_size: usize,
    pub hidden_size: usize,
    /// Input weights per gate, `hidden x input`.
    pub w_x: [LayerMatrix; 4],
    /// Recurrent weights per gate, `hidden x hidden`.
    pub w_h: [LayerMatrix; 4],
    /// Q8 biases per gate.
    pub bias: [Vec<i16>; 4],
}

impl LstmLayer {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let wx = || LayerMatrix::Dense(DenseMatrix::zeros(hidden_size, input_size, Q8));
        let wh = || LayerMatrix::Dense(DenseMatrix::zeros(hidden_size, hidden_size, Q8));
        LstmLayer {
            input_size,
            hidden_size,
            w_x: [wx(), wx(), wx(), wx()],
            w_h: [wh(), wh(), wh(), wh()],
            bias: core::array::from_fn(|_| alloc::vec![0; hidden_size]),
        }
    }

    /// All eight matrices in canonical order: `W_x{i,f,o,c}` then `W_h{i,f,o,c}`.
    pub fn matrices(&self) -> impl Iterator<Item = &LayerMatrix> {
        self.w_x.iter().chain(self.w_h.iter())
    }

    pub fn param_count(&self) -> usize {
        4 * self.hidden_size * (self.input_size + self.hidden_size + 1)
    }

    pub fn validate(&self) -> Result<(), Error> {
        for m in &self.w_x {
            check_matrix(m, self.hidden_size, self.input_size, Q8)?;
        }
        for m in &self.w_h {
            check_matrix(m, self.hidden_size, self.hidden_size, Q8)?;
        }
        for b in &self.bias {
            check_len(b.len(), self.hidden_size)?;
            check_codes(b, Q8)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseLayer {
    pub weights: LayerMatrix,
    /// Bias in the same format as the weights.
    pub bias: Vec<i16>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation, format: QuantFormat) -> Self {
        DenseLayer {
            weights: LayerMatrix::Dense(DenseMatrix::zeros(outputs, inputs, format)),
            bias: alloc::vec![0; outputs],
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn format(&self) -> QuantFormat {
        self.weights.format()
    }

    pub fn param_count(&self) -> usize {
        self.outputs() * (self.inputs() + 1)
    }
}

/// Layer widths of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub mel_bins: usize,
    pub lstm_hidden: [usize; 2],
    pub dense_hidden: usize,
}

impl ModelDims {
    /// 128 mel bins, two 256-unit LSTMs, a 128-unit dense layer and a
    /// 128-bin mask output: 968,960 parameters.
    pub const FULL: ModelDims = ModelDims {
        mel_bins: 128,
        lstm_hidden: [256, 256],
        dense_hidden: 128,
    };

    pub fn param_count(&self) -> usize {
        let [h1, h2] = self.lstm_hidden;
        4 * h1 * (self.mel_bins + h1 + 1)
            + 4 * h2 * (h1 + h2 + 1)
            + self.dense_hidden * (h2 + 1)
            + self.mel_bins * (self.dense_hidden + 1)
    }
}

/// Identifies one of the four layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerId {
    Lstm1,
    Lstm2,
    Dense1,
    Dense2,
}

impl LayerId {
    pub const ALL: [LayerId; 4] = [LayerId::Lstm1, LayerId::Lstm2, LayerId::Dense1, LayerId::Dense2];

    pub fn name(self) -> &'static str {
        match self {
            LayerId::Lstm1 => "lstm1",
            LayerId::Lstm2 => "lstm2",
            LayerId::Dense1 => "dense1",
            LayerId::Dense2 => "dense2",
        }
    }

    pub fn parse(name: &str) -> Option<LayerId> {
        LayerId::ALL.into_iter().find(|l| l.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_final(self) -> bool {
        self == LayerId::Dense2
    }
}

/// The complete enhancement model: DSP settings, input transform and network.
#[derive(Debug, Clone, PartialEq)]
pub struct SeModel {
    pub dsp: DspConfig,
    pub filterbank: MelFilterbank,
    pub qeq: QeqParams,
    pub lstm: [LstmLayer; 2],
    pub dense: [DenseLayer; 2],
}

impl SeModel {
    /// All-zero network with the default filterbank and identity QEQ.
    pub fn zeros(dsp: DspConfig, dims: ModelDims) -> Result<Self, Error> {
        let dsp = DspConfig {
            mel_bins: dims.mel_bins,
            ..dsp
        };
        dsp.validate()?;
        let [h1, h2] = dims.lstm_hidden;
        let model = SeModel {
            dsp,
            filterbank: MelFilterbank::triangular(dims.mel_bins, dsp.frame_size, dsp.sample_rate)?,
            qeq: QeqParams::identity(dims.mel_bins),
            lstm: [LstmLayer::zeros(dims.mel_bins, h1), LstmLayer::zeros(h1, h2)],
            dense: [
                DenseLayer::zeros(h2, dims.dense_hidden, Activation::Tanh, Q8),
                DenseLayer::zeros(dims.dense_hidden, dims.mel_bins, Activation::Sigmoid, Q16),
            ],
        };
        model.validate()?;
        Ok(model)
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            mel_bins: self.dsp.mel_bins,
            lstm_hidden: [self.lstm[0].hidden_size, self.lstm[1].hidden_size],
            dense_hidden: self.dense[0].outputs(),
        }
    }

    /// Check the width chain `mel -> h1 -> h2 -> d -> mel` and all formats.
    pub fn validate(&self) -> Result<(), Error> {
        self.dsp.validate()?;
        let mel = self.dsp.mel_bins;
        if self.filterbank.mel_bins() != mel || self.filterbank.freq_bins() != self.dsp.freq_bins() {
            return Err(Error::DimensionMismatch {
                expected: mel * self.dsp.freq_bins(),
                found: self.filterbank.mel_bins() * self.filterbank.freq_bins(),
            });
        }
        check_len(self.qeq.len(), mel)?;
        let [l1, l2] = &self.lstm;
        let [d1, d2] = &self.dense;
        check_len(l1.input_size, mel)?;
        check_len(l2.input_size, l1.hidden_size)?;
        l1.validate()?;
        l2.validate()?;
        check_matrix(&d1.weights, d1.outputs(), l2.hidden_size, Q8)?;
        check_matrix(&d2.weights, mel, d1.outputs(), Q16)?;
        for d in [d1, d2] {
            check_len(d.bias.len(), d.outputs())?;
            check_codes(&d.bias, d.format())?;
        }
        if d1.activation != Activation::Tanh || d2.activation != Activation::Sigmoid {
            return Err(Error::InvalidConfig("dense activations must be tanh then sigmoid"));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.lstm.iter().map(LstmLayer::param_count).sum::<usize>()
            + self.dense.iter().map(DenseLayer::param_count).sum::<usize>()
    }

    /// Weight matrices of one layer in canonical order.
    pub fn layer_matrices(&self, layer: LayerId) -> Vec<&LayerMatrix> {
        match layer {
            LayerId::Lstm1 => self.lstm[0].matrices().collect(),
            LayerId::Lstm2 => self.lstm[1].matrices().collect(),
            LayerId::Dense1 => alloc::vec![&self.dense[0].weights],
            LayerId::Dense2 => alloc::vec![&self.dense[1].weights],
        }
    }

    /// Bias vectors of one layer in canonical order.
    pub fn layer_biases(&self, layer: LayerId) -> Vec<&[i16]> {
        match layer {
            LayerId::Lstm1 => self.lstm[0].bias.iter().map(Vec::as_slice).collect(),
            LayerId::Lstm2 => self.lstm[1].bias.iter().map(Vec::as_slice).collect(),
            LayerId::Dense1 => alloc::vec![self.dense[0].bias.as_slice()],
            LayerId::Dense2 => alloc::vec![self.dense[1].bias.as_slice()],
        }
    }

    pub fn layer_format(&self, layer: LayerId) -> QuantFormat {
        match layer {
            LayerId::Dense2 => self.dense[1].format(),
            LayerId::Dense1 => self.dense[0].format(),
            _ => Q8,
        }
    }

    pub fn layer_param_count(&self, layer: LayerId) -> usize {
        match layer {
            LayerId::Lstm1 => self.lstm[0].param_count(),
            LayerId::Lstm2 => self.lstm[1].param_count(),
            LayerId::Dense1 => self.dense[0].param_count(),
            LayerId::Dense2 => self.dense[1].param_count(),
        }
    }

    /// Parameters of `layer` that are not stored: matrix positions outside
    /// the encoding, plus biases of rows removed by unit pruning.
    pub fn layer_pruned_count(&self, layer: LayerId) -> usize {
        let matrices = self.layer_matrices(layer);
        let pruned_weights: usize = matrices.iter().map(|m| m.len() - m.stored()).sum();
        // Each bias vector pairs with the input matrix of the same gate; a
        // bias entry counts as pruned when its row is gone and it is zero.
        let pruned_bias: usize = matrices
            .iter()
            .zip(self.layer_biases(layer))
            .filter_map(|(m, bias)| match m {
                LayerMatrix::Sparse(s) => s.kept_rows().map(|kept| {
                    let mut live = alloc::vec![false; s.rows()];
                    for &r in kept {
                        live[r as usize] = true;
                    }
                    bias.iter()
                        .zip(&live)
                        .filter(|(&b, &l)| !l && b == 0)
                        .count()
                }),
                LayerMatrix::Dense(_) => None,
            })
            .sum();
        pruned_weights + pruned_bias
    }

    /// Parameter-weighted fraction of pruned parameters across the model.
    pub fn sparsity(&self) -> f64 {
        let pruned: usize = LayerId::ALL.iter().map(|&l| self.layer_pruned_count(l)).sum();
        pruned as f64 / self.param_count() as f64
    }

    /// Whether every weight is integer-quantized. Always true for this type;
    /// reported for the deployability check.
    pub fn is_quantized(&self) -> bool {
        true
    }

    /// The network only consumes past and present frames.
    pub fn is_causal(&self) -> bool {
        true
    }

    /// Which sparsity structure the model was pruned with, if uniform.
    pub fn structure(&self) -> Option<SparsityStructure> {
        let mut found = None;
        for layer in LayerId::ALL {
            for m in self.layer_matrices(layer) {
                match (found, m.structure()) {
                    (_, None) => {}
                    (None, s) => found = s,
                    (Some(a), Some(b)) if a == b => {}
                    _ => return None,
                }
            }
        }
        found
    }
}

fn check_len(found: usize, expected: usize) -> Result<(), Error> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

fn check_matrix(m: &LayerMatrix, rows: usize, cols: usize, fmt: QuantFormat) -> Result<(), Error> {
    check_len(m.rows(), rows)?;
    check_len(m.cols(), cols)?;
    if m.format() != fmt {
        return Err(Error::InvalidConfig("layer weight format does not match its role"));
    }
    Ok(())
}

fn check_codes(values: &[i16], fmt: QuantFormat) -> Result<(), Error> {
    match values.iter().find(|&&v| !fmt.contains(v as i32)) {
        Some(&v) => Err(Error::CodeOutOfRange(v as i32)),
        None => Ok(()),
    }
}
