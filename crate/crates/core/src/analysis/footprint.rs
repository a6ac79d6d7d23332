//! Memory footprint: parameters, sparse index metadata and working memory.
//!
//! Working memory is every buffer live during one frame at its stored width:
//!
//! * the quantized feature vector (1 byte per mel bin),
//! * per LSTM layer the four gate vectors (1 byte each), `h` (1 byte) and
//!   the Q3.12 cell state (2 bytes) per unit,
//! * the dense hidden activations (1 byte) and the Q16 mask (2 bytes),
//! * the framing buffers, `frame` input samples plus `frame - hop` pending
//!   overlap-add samples, as 16-bit PCM.
//!
//! Under [`Precision::Float32`] every stored value takes 4 bytes.

use crate::engine::{LayerId, SeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Precision {
    /// The model's own quantized widths.
    Stored,
    /// Every parameter and activation as a 32-bit float.
    Float32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Footprint {
    /// Stored parameter values, weights and biases.
    pub weight_bytes: usize,
    /// Row pointers, column, block and kept-row indices.
    pub index_bytes: usize,
    /// Activations, recurrent state and framing buffers.
    pub working_bytes: usize,
}

impl Footprint {
    /// Everything that must be resident in memory.
    pub fn total(&self) -> usize {
        self.weight_bytes + self.index_bytes + self.working_bytes
    }

    /// Parameter and working memory without index metadata, the
    /// accounting used by published model-size tables.
    pub fn without_indices(&self) -> usize {
        self.weight_bytes + self.working_bytes
    }
}

/// Bytes per mebibyte.
pub const MIB: f64 = 1_048_576.0;
/// Bytes per kibibyte.
pub const KIB: f64 = 1024.0;

pub fn estimate_footprint(model: &SeModel, precision: Precision) -> Footprint {
    let width = |bytes: usize| match precision {
        Precision::Stored => bytes,
        Precision::Float32 => 4,
    };
    let mut fp = Footprint::default();
    for layer in LayerId::ALL {
        let live = model.layer_param_count(layer) - model.layer_pruned_count(layer);
        fp.weight_bytes += live * width(model.layer_format(layer).bytes());
        if precision == Precision::Stored {
            fp.index_bytes += model
                .layer_matrices(layer)
                .iter()
                .map(|m| m.index_bytes())
                .sum::<usize>();
        }
    }
    let dsp = &model.dsp;
    let mut working = dsp.mel_bins * width(1);
    for l in &model.lstm {
        working += l.hidden_size * (5 * width(1) + width(2));
    }
    working += model.dense[0].outputs() * width(1);
    working += model.dense[1].outputs() * width(2);
    working += (2 * dsp.frame_size - dsp.hop_size) * width(2);
    fp.working_bytes = working;
    fp
}
