//! Symmetric fixed-point formats with a fixed `[-1, 1)` range.
//!
//! Every tensor in the network uses one of two formats: Q0.7 in an `i8`
//! sized container or Q0.15 in an `i16` sized container. There are no
//! per-tensor scales; the input feature affine (QEQ) is what keeps the
//! network inputs inside the range.

use alloc::vec::Vec;

use crate::Error;

/// A signed fixed-point format with `bits - 1` fractional bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantFormat {
    bits: u8,
}

/// 8-bit format, scale `2^-7`.
pub const Q8: QuantFormat = QuantFormat { bits: 8 };
/// 16-bit format, scale `2^-15`.
pub const Q16: QuantFormat = QuantFormat { bits: 16 };

impl QuantFormat {
    pub fn new(bits: u8) -> Result<Self, Error> {
        match bits {
            8 | 16 => Ok(QuantFormat { bits }),
            _ => Err(Error::UnsupportedFormat(bits)),
        }
    }

    #[inline]
    pub const fn bits(self) -> u32 {
        self.bits as u32
    }

    #[inline]
    pub const fn frac_bits(self) -> u32 {
        self.bits as u32 - 1
    }

    #[inline]
    pub const fn min_code(self) -> i32 {
        -(1 << (self.bits - 1))
    }

    #[inline]
    pub const fn max_code(self) -> i32 {
        (1 << (self.bits - 1)) - 1
    }

    /// Bytes used by one stored element.
    #[inline]
    pub const fn bytes(self) -> usize {
        self.bits as usize / 8
    }

    /// Value of one least significant bit.
    #[inline]
    pub fn lsb(self) -> f64 {
        libm::ldexp(1.0, -(self.frac_bits() as i32))
    }

    #[inline]
    pub fn contains(self, code: i32) -> bool {
        code >= self.min_code() && code <= self.max_code()
    }
}

/// Round half to even, then saturate into `fmt`. NaN maps to zero.
pub fn quantize(x: f64, fmt: QuantFormat) -> i32 {
    if x.is_nan() {
        return 0;
    }
    let scaled = libm::ldexp(x, fmt.frac_bits() as i32);
    let lo = fmt.min_code() as f64;
    let hi = fmt.max_code() as f64;
    // Clamp before rounding so huge values never reach the cast.
    let r = libm::rint(scaled.clamp(lo - 1.0, hi + 1.0));
    r.clamp(lo, hi) as i32
}

#[inline]
pub fn dequantize(q: i32, fmt: QuantFormat) -> f64 {
    libm::ldexp(q as f64, -(fmt.frac_bits() as i32))
}

/// 32-bit multiply-accumulate register.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Accumulator(pub i32);

impl Accumulator {
    pub const ZERO: Accumulator = Accumulator(0);

    /// `acc + a * b` with exact integer arithmetic.
    ///
    /// Overflowing 32 bits breaks the kernel contract; debug builds panic,
    /// release builds wrap.
    #[inline]
    pub fn mac(self, a: i32, b: i32) -> Accumulator {
        let product = a * b;
        if cfg!(debug_assertions) {
            match self.0.checked_add(product) {
                Some(v) => Accumulator(v),
                None => panic!("accumulator overflow: {} + {}", self.0, product),
            }
        } else {
            Accumulator(self.0.wrapping_add(product))
        }
    }

    /// Checked variant of [`Accumulator::mac`].
    #[inline]
    pub fn checked_mac(self, a: i32, b: i32) -> Option<Accumulator> {
        a.checked_mul(b)
            .and_then(|p| self.0.checked_add(p))
            .map(Accumulator)
    }
}

/// Free-function form of [`Accumulator::mac`].
#[inline]
pub fn mac(acc: Accumulator, a: i32, b: i32) -> Accumulator {
    acc.mac(a, b)
}

/// Divide by `2^shift` rounding half to even. Negative shifts multiply.
#[inline]
pub fn shift_round_even(value: i64, shift: i32) -> i64 {
    if shift <= 0 {
        return value << (-shift);
    }
    let floor = value >> shift;
    let rem = value - (floor << shift);
    let half = 1i64 << (shift - 1);
    if rem > half || (rem == half && floor & 1 == 1) {
        floor + 1
    } else {
        floor
    }
}

/// Rescale a raw value with `from_frac` fractional bits into `fmt`, saturating.
#[inline]
pub fn rescale(value: i64, from_frac: u32, fmt: QuantFormat) -> i32 {
    let r = shift_round_even(value, from_frac as i32 - fmt.frac_bits() as i32);
    r.clamp(fmt.min_code() as i64, fmt.max_code() as i64) as i32
}

/// Rescale a sum of `in_fmt * in_fmt` products into `out_fmt`.
#[inline]
pub fn requantize(acc: Accumulator, in_fmt: QuantFormat, out_fmt: QuantFormat) -> i32 {
    rescale(acc.0 as i64, 2 * in_fmt.frac_bits(), out_fmt)
}

/// A dense integer tensor tagged with its format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantTensor {
    data: Vec<i16>,
    shape: Vec<usize>,
    format: QuantFormat,
}

impl QuantTensor {
    pub fn new(data: Vec<i16>, shape: Vec<usize>, format: QuantFormat) -> Result<Self, Error> {
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(Error::ShapeMismatch {
                expected: count,
                found: data.len(),
            });
        }
        if let Some(&bad) = data.iter().find(|&&v| !format.contains(v as i32)) {
            return Err(Error::CodeOutOfRange(bad as i32));
        }
        Ok(QuantTensor {
            data,
            shape,
            format,
        })
    }

    pub fn zeros(shape: Vec<usize>, format: QuantFormat) -> Self {
        let count = shape.iter().product();
        QuantTensor {
            data: alloc::vec![0; count],
            shape,
            format,
        }
    }

    pub fn vector(data: Vec<i16>, format: QuantFormat) -> Result<Self, Error> {
        let n = data.len();
        Self::new(data, alloc::vec![n], format)
    }

    pub fn from_f64(values: &[f64], shape: Vec<usize>, format: QuantFormat) -> Result<Self, Error> {
        let data = values.iter().map(|&v| quantize(v, format) as i16).collect();
        Self::new(data, shape, format)
    }

    pub fn data(&self) -> &[i16] {
        &self.data
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn format(&self) -> QuantFormat {
        self.format
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|&v| dequantize(v as i32, self.format))
            .collect()
    }

    pub fn into_data(self) -> Vec<i16> {
        self.data
    }
}
