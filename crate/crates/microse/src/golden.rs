//! Golden quantization vectors shared with the exporter.
//!
//! One line per code point of both formats, 256 lines for 8 bits then
//! 65 536 lines for 16 bits, each `bits code value half_up`:
//!
//! * `value` is `code / 2^(bits-1)` printed as the shortest decimal that
//!   parses back to the same double, so `quantize(value) == code`;
//! * `half_up` is `quantize((code + 0.5) / 2^(bits-1))`, which exercises
//!   round-half-to-even at every midpoint and saturation at the top code.
//!
//! Lines starting with `#` are comments.

use std::fmt::Write;

use microse_core::quant::{dequantize, quantize};
use microse_core::{QuantFormat, Q16, Q8};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldenVector {
    pub bits: u8,
    pub code: i32,
    pub value: f64,
    pub half_up: i32,
}

pub fn vectors() -> Vec<GoldenVector> {
    let mut out = Vec::with_capacity(256 + 65_536);
    for fmt in [Q8, Q16] {
        for code in fmt.min_code()..=fmt.max_code() {
            out.push(vector(fmt, code));
        }
    }
    out
}

fn vector(fmt: QuantFormat, code: i32) -> GoldenVector {
    let value = dequantize(code, fmt);
    GoldenVector {
        bits: fmt.bits() as u8,
        code,
        value,
        half_up: quantize(value + 0.5 * fmt.lsb(), fmt),
    }
}

pub fn render() -> String {
    let mut s = String::from("# bits code value half_up\n");
    for v in vectors() {
        let _ = writeln!(s, "{} {} {:?} {}", v.bits, v.code, v.value, v.half_up);
    }
    s
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("golden vectors line {line}: {reason}")]
pub struct GoldenError {
    pub line: usize,
    pub reason: String,
}

pub fn parse(text: &str) -> Result<Vec<GoldenVector>, GoldenError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: &str| GoldenError {
            line: i + 1,
            reason: reason.to_string(),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(err("expected four fields"));
        }
        out.push(GoldenVector {
            bits: f[0].parse().map_err(|_| err("bad bits"))?,
            code: f[1].parse().map_err(|_| err("bad code"))?,
            value: f[2].parse().map_err(|_| err("bad value"))?,
            half_up: f[3].parse().map_err(|_| err("bad half_up"))?,
        });
    }
    Ok(out)
}

/// Check a vector against this build's arithmetic.
pub fn check(v: &GoldenVector) -> bool {
    let Ok(fmt) = QuantFormat::new(v.bits) else {
        return false;
    };
    quantize(v.value, fmt) == v.code
        && dequantize(v.code, fmt) == v.value
        && quantize(v.value + 0.5 * fmt.lsb(), fmt) == v.half_up
}
