//! Fixed-point sigmoid and tanh via interpolated lookup tables.
//!
//! Inputs are Q3.12 (`[-8, 8)`), outputs Q15 held in an `i32` so that
//! `+1.0` (32768) is representable before the caller narrows it.

use alloc::vec::Vec;

use crate::quant::shift_round_even;

/// Fractional bits of the table input (and of the LSTM cell state).
pub const INPUT_FRAC: u32 = 12;
/// Fractional bits of the table output.
pub const OUTPUT_FRAC: u32 = 15;

const ENTRIES: usize = 1024;
// 65536 input codes over 1024 segments.
const SEGMENT_SHIFT: u32 = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lut {
    table: Vec<i32>,
}

impl Lut {
    fn build(f: impl Fn(f64) -> f64) -> Lut {
        let step = 16.0 / ENTRIES as f64;
        let table = (0..=ENTRIES)
            .map(|i| {
                let x = -8.0 + i as f64 * step;
                libm::rint(f(x) * (1u32 << OUTPUT_FRAC) as f64) as i32
            })
            .collect();
        Lut { table }
    }

    /// Evaluate at a Q3.12 input, saturating outside `[-8, 8)`.
    #[inline]
    pub fn eval(&self, x_q12: i32) -> i32 {
        let u = (x_q12.clamp(-32768, 32767) + 32768) as u32;
        let i = (u >> SEGMENT_SHIFT) as usize;
        let frac = (u & ((1 << SEGMENT_SHIFT) - 1)) as i64;
        let (a, b) = (self.table[i] as i64, self.table[i + 1] as i64);
        (a + shift_round_even((b - a) * frac, SEGMENT_SHIFT as i32)) as i32
    }
}

/// Sigmoid and tanh tables used by every layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationTables {
    pub sigmoid: Lut,
    pub tanh: Lut,
}

impl Default for ActivationTables {
    fn default() -> Self {
        Self::new()
    }
}

impl ActivationTables {
    pub fn new() -> Self {
        ActivationTables {
            sigmoid: Lut::build(|x| 1.0 / (1.0 + libm::exp(-x))),
            tanh: Lut::build(libm::tanh),
        }
    }
}

/// Convert a raw accumulator with `frac` fractional bits to a table input.
#[inline]
pub fn to_table_input(acc: i64, frac: u32) -> i32 {
    shift_round_even(acc, frac as i32 - INPUT_FRAC as i32).clamp(-32768, 32767) as i32
}

/// Narrow a Q15 table output to Q0.7.
#[inline]
pub fn to_q8(y_q15: i32) -> i16 {
    shift_round_even(y_q15 as i64, (OUTPUT_FRAC - 7) as i32).clamp(-128, 127) as i16
}

/// Narrow a Q15 table output to Q0.15.
#[inline]
pub fn to_q16(y_q15: i32) -> i16 {
    y_q15.clamp(-32768, 32767) as i16
}
