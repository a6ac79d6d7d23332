//! Fixed-point sparse LSTM speech enhancement for microcontroller-class
//! neural accelerators.
//!
//! The crate is `no_std` with `alloc`. It holds everything that is pure
//! computation: the fixed-point substrate ([`quant`]), the three sparse
//! weight encodings ([`sparse`]), the STFT/mel front end ([`dsp`]), the
//! streaming mask network ([`engine`]), offline magnitude pruning and the
//! per-layer sparsity search ([`compression`]) and the metric, speedup,
//! footprint and deployability estimators ([`analysis`]).
//!
//! File formats, WAV I/O and the command line live in the `microse` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
#[macro_use]
extern crate std;

pub mod analysis;
pub mod compression;
pub mod dsp;
pub mod engine;
pub mod quant;
pub mod sparse;
#[cfg(any(test, feature = "rand"))]
pub mod toy;

pub use quant::{Accumulator, QuantFormat, QuantTensor, Q16, Q8};
pub use sparse::{LayerMatrix, PruneMask, SparseMatrix, SparsityStructure};

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unsupported quantization width {0} (expected 8 or 16)")]
    UnsupportedFormat(u8),
    #[error("element count {found} does not match shape product {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("code {0} outside the format range")]
    CodeOutOfRange(i32),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("mask is not constant within the groups of {0}")]
    InconsistentMask(&'static str),
    #[error("invalid sparsity structure: {0}")]
    InvalidStructure(&'static str),
    #[error("signal has {found} samples, at least {needed} required")]
    SignalTooShort { needed: usize, found: usize },
    #[error("signal is silent")]
    SilentSignal,
    #[error("input is empty")]
    EmptyInput,
    #[error("sample rate mismatch: model expects {model} Hz, input is {input} Hz")]
    SampleRateMismatch { model: u32, input: u32 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("unit pruning of the final layer is not allowed")]
    FinalLayerUnitPruning,
    #[error("sparsity {0} outside [0, 1)")]
    InvalidSparsity(f64),
    #[error("invalid sparsity plan: {0}")]
    InvalidPlan(&'static str),
    #[error("no sparsity plan satisfies the target")]
    Infeasible,
    #[error("anchor table line {line}: {reason}")]
    AnchorParse { line: usize, reason: &'static str },
}
