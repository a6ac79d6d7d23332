//! Integer forward pass: LSTM cells and dense layers.

use alloc::vec;
use alloc::vec::Vec;

use super::activation::{to_q16, to_q8, to_table_input, ActivationTables, INPUT_FRAC};
use super::model::{Activation, DenseLayer, LstmLayer, SeModel};
use crate::quant::{shift_round_even, Accumulator, QuantTensor, Q16, Q8};
use crate::Error;

/// Fractional bits of the cell state (Q3.12, range `[-8, 8)`).
pub const CELL_FRAC: u32 = INPUT_FRAC;

/// Recurrent state of the two LSTM layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkState {
    /// Q8 hidden outputs.
    pub h: [Vec<i16>; 2],
    /// Q3.12 cell states.
    pub c: [Vec<i16>; 2],
}

impl NetworkState {
    pub fn new(model: &SeModel) -> Self {
        let [a, b] = [model.lstm[0].hidden_size, model.lstm[1].hidden_size];
        NetworkState {
            h: [vec![0; a], vec![0; b]],
            c: [vec![0; a], vec![0; b]],
        }
    }

    pub fn reset(&mut self) {
        for v in self.h.iter_mut().chain(self.c.iter_mut()) {
            v.fill(0);
        }
    }
}

/// Reusable buffers for one LSTM step.
#[derive(Debug, Clone, Default)]
pub struct LstmScratch {
    acc: Vec<Accumulator>,
    gates: [Vec<i16>; 4],
    h_next: Vec<i16>,
}

/// One LSTM time step in place: `h` and `c` hold the previous state on entry
/// and the new state on return.
///
/// Gate pre-activations are accumulated exactly, narrowed to Q3.12 for the
/// lookup tables, and every gate output is quantized to Q8 after its
/// nonlinearity. The cell state stays in Q3.12.
pub fn lstm_step_in_place(
    layer: &LstmLayer,
    tables: &ActivationTables,
    x: &[i16],
    h: &mut [i16],
    c: &mut [i16],
    scratch: &mut LstmScratch,
) -> Result<(), Error> {
    check(x.len(), layer.input_size)?;
    check(h.len(), layer.hidden_size)?;
    check(c.len(), layer.hidden_size)?;
    let n = layer.hidden_size;
    scratch.acc.resize(n, Accumulator::ZERO);
    scratch.h_next.resize(n, 0);
    for g in 0..4 {
        // Bias is Q0.7; products are Q0.14.
        for (a, &b) in scratch.acc.iter_mut().zip(&layer.bias[g]) {
            *a = Accumulator((b as i32) << 7);
        }
        layer.w_x[g].accumulate(x, &mut scratch.acc);
        layer.w_h[g].accumulate(h, &mut scratch.acc);
        let lut = if g == 3 { &tables.tanh } else { &tables.sigmoid };
        let out = &mut scratch.gates[g];
        out.clear();
        out.extend(
            scratch
                .acc
                .iter()
                .map(|a| to_q8(lut.eval(to_table_input(a.0 as i64, 14)))),
        );
    }
    let [i, f, o, u] = &scratch.gates;
    for k in 0..n {
        // f * c_prev is Q0.7 x Q3.12 = Q.19; i * u is Q.14.
        let sum = f[k] as i64 * c[k] as i64 + ((i[k] as i64 * u[k] as i64) << 5);
        let c_new = shift_round_even(sum, 7).clamp(-32768, 32767) as i16;
        c[k] = c_new;
        let t = to_q8(tables.tanh.eval(c_new as i32));
        scratch.h_next[k] = shift_round_even(o[k] as i64 * t as i64, 7).clamp(-128, 127) as i16;
    }
    h.copy_from_slice(&scratch.h_next);
    Ok(())
}

/// Allocating form of [`lstm_step_in_place`]; returns `(h, c)`.
pub fn lstm_step(
    layer: &LstmLayer,
    tables: &ActivationTables,
    x: &QuantTensor,
    h_prev: &[i16],
    c_prev: &[i16],
) -> Result<(Vec<i16>, Vec<i16>), Error> {
    if x.format() != Q8 {
        return Err(Error::InvalidConfig("LSTM input must be Q8"));
    }
    let mut h = h_prev.to_vec();
    let mut c = c_prev.to_vec();
    lstm_step_in_place(layer, tables, x.data(), &mut h, &mut c, &mut LstmScratch::default())?;
    Ok((h, c))
}

/// Dense layer forward pass. The output is Q8 for 8-bit layers and Q16 for
/// 16-bit layers; inputs are always Q8.
pub fn dense_forward(
    layer: &DenseLayer,
    tables: &ActivationTables,
    x: &[i16],
    acc: &mut Vec<Accumulator>,
    out: &mut [i16],
) -> Result<(), Error> {
    check(x.len(), layer.inputs())?;
    check(out.len(), layer.outputs())?;
    let fmt = layer.format();
    let frac = fmt.frac_bits() + 7;
    acc.clear();
    acc.extend(layer.bias.iter().map(|&b| Accumulator((b as i32) << 7)));
    layer.weights.accumulate(x, acc);
    let lut = match layer.activation {
        Activation::Tanh => &tables.tanh,
        Activation::Sigmoid => &tables.sigmoid,
    };
    for (o, a) in out.iter_mut().zip(acc.iter()) {
        let y = lut.eval(to_table_input(a.0 as i64, frac));
        *o = if fmt == Q16 { to_q16(y) } else { to_q8(y) };
    }
    Ok(())
}

/// Buffers for a full forward pass.
#[derive(Debug, Clone, Default)]
pub struct NetworkScratch {
    lstm: LstmScratch,
    acc: Vec<Accumulator>,
    dense1: Vec<i16>,
}

/// Run one frame of Q8 features through the network, advancing `state`,
/// and write the Q16 mask.
pub fn forward_frame(
    model: &SeModel,
    tables: &ActivationTables,
    state: &mut NetworkState,
    features: &[i16],
    scratch: &mut NetworkScratch,
    mask: &mut [i16],
) -> Result<(), Error> {
    check(features.len(), model.dsp.mel_bins)?;
    let NetworkState { h, c } = state;
    let [h1, h2] = h;
    let [c1, c2] = c;
    lstm_step_in_place(&model.lstm[0], tables, features, h1, c1, &mut scratch.lstm)?;
    lstm_step_in_place(&model.lstm[1], tables, h1, h2, c2, &mut scratch.lstm)?;
    scratch.dense1.resize(model.dense[0].outputs(), 0);
    dense_forward(&model.dense[0], tables, h2, &mut scratch.acc, &mut scratch.dense1)?;
    dense_forward(&model.dense[1], tables, &scratch.dense1, &mut scratch.acc, mask)
}

fn check(found: usize, expected: usize) -> Result<(), Error> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Double-precision forward pass over the dequantized weights, used as the
/// test oracle for the integer kernels.
pub mod reference {
    use alloc::vec::Vec;

    use crate::engine::model::LstmLayer;
    use crate::quant::{dequantize, Q8};

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + libm::exp(-x))
    }

    fn matvec(w: &[i16], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
        (0..rows)
            .map(|r| {
                (0..cols)
                    .map(|c| dequantize(w[r * cols + c] as i32, Q8) * x[c])
                    .sum()
            })
            .collect()
    }

    /// One LSTM step on real-valued state. Returns `(h, c)`.
    pub fn lstm_step(layer: &LstmLayer, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = layer.hidden_size;
        let gate = |g: usize| -> Vec<f64> {
            let a = matvec(&layer.w_x[g].decode(), n, layer.input_size, x);
            let b = matvec(&layer.w_h[g].decode(), n, n, h);
            (0..n)
                .map(|k| a[k] + b[k] + dequantize(layer.bias[g][k] as i32, Q8))
                .collect()
        };
        let (i, f, o, u) = (gate(0), gate(1), gate(2), gate(3));
        let mut c_new = Vec::with_capacity(n);
        let mut h_new = Vec::with_capacity(n);
        for k in 0..n {
            let ck = sigmoid(f[k]) * c[k] + sigmoid(i[k]) * libm::tanh(u[k]);
            c_new.push(ck);
            h_new.push(sigmoid(o[k]) * libm::tanh(ck));
        }
        (h_new, c_new)
    }
}
