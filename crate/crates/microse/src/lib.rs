//! File formats, WAV I/O, evaluation-set search and the command line for
//! the `microse-core` speech enhancement engine.

pub mod cli;
pub mod container;
pub mod eval;
pub mod golden;
pub mod hash;
pub mod render;
pub mod report;
pub mod wav;

pub use microse_core as core;
