//! Weight matrix encodings for the three pruning structures.
//!
//! * `Weight`: unstructured. Row pointers plus 16-bit column indices.
//! * `Block`: `1 x width` blocks along a row (width 8 by default). Row
//!   pointers plus one 16-bit block-column index per stored block. The last
//!   block of a row may be partial when `cols` is not a multiple of the
//!   width; the missing columns are logical zero padding and are never
//!   stored.
//! * `Unit`: whole rows (and, for recurrent matrices, the matching columns)
//!   removed. What remains is a small dense matrix plus the kept row and
//!   column index lists.
//!
//! All kernels accumulate exact integer products into 32-bit accumulators.

use alloc::vec;
use alloc::vec::Vec;

use crate::quant::{rescale, Accumulator, QuantFormat, QuantTensor};
use crate::Error;

/// Default block width for 8-bit weights.
pub const DEFAULT_BLOCK_WIDTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SparsityStructure {
    /// One group per scalar weight.
    Weight,
    /// One group per `1 x width` run of a row.
    Block { width: usize },
    /// One group per output row (neuron).
    Unit,
}

impl SparsityStructure {
    pub const fn block() -> Self {
        SparsityStructure::Block {
            width: DEFAULT_BLOCK_WIDTH,
        }
    }

    /// Group width for a matrix with `cols` columns.
    pub fn block_w(self, cols: usize) -> usize {
        match self {
            SparsityStructure::Weight => 1,
            SparsityStructure::Block { width } => width,
            SparsityStructure::Unit => cols,
        }
    }

    pub const fn block_h(self) -> usize {
        1
    }

    pub fn name(self) -> &'static str {
        match self {
            SparsityStructure::Weight => "weight",
            SparsityStructure::Block { .. } => "block",
            SparsityStructure::Unit => "unit",
        }
    }

    pub fn validate(self) -> Result<(), Error> {
        match self {
            SparsityStructure::Block { width } if width == 0 || width > u16::MAX as usize => {
                Err(Error::InvalidStructure("block width must be in 1..=65535"))
            }
            _ => Ok(()),
        }
    }
}

/// Keep/prune flag per weight, row major. `true` means kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl PruneMask {
    pub fn all(rows: usize, cols: usize, keep: bool) -> Self {
        PruneMask {
            rows,
            cols,
            bits: vec![keep; rows * cols],
        }
    }

    pub fn from_bits(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self, Error> {
        if bits.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: rows * cols,
                found: bits.len(),
            });
        }
        Ok(PruneMask { rows, cols, bits })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, keep: bool) {
        self.bits[r * self.cols + c] = keep;
    }

    pub fn prune_row(&mut self, r: usize) {
        self.bits[r * self.cols..(r + 1) * self.cols].fill(false);
    }

    pub fn prune_col(&mut self, c: usize) {
        for r in 0..self.rows {
            self.bits[r * self.cols + c] = false;
        }
    }

    pub fn kept(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Check the mask is constant within every group of `structure`.
    ///
    /// For `Unit` the mask must factor as `row_kept[r] && col_kept[c]`,
    /// which covers plain row removal and the row-and-column removal that
    /// recurrent matrices need.
    pub fn check_structure(&self, structure: SparsityStructure) -> Result<(), Error> {
        structure.validate()?;
        match structure {
            SparsityStructure::Weight => Ok(()),
            SparsityStructure::Block { width } => {
                for r in 0..self.rows {
                    let row = &self.bits[r * self.cols..(r + 1) * self.cols];
                    for chunk in row.chunks(width) {
                        if chunk.iter().any(|&b| b != chunk[0]) {
                            return Err(Error::InconsistentMask("block"));
                        }
                    }
                }
                Ok(())
            }
            SparsityStructure::Unit => {
                let (row_kept, col_kept) = self.factor();
                for r in 0..self.rows {
                    for c in 0..self.cols {
                        if self.get(r, c) != (row_kept[r] && col_kept[c]) {
                            return Err(Error::InconsistentMask("unit"));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    fn factor(&self) -> (Vec<bool>, Vec<bool>) {
        let mut row_kept = vec![false; self.rows];
        let mut col_kept = vec![false; self.cols];
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.get(r, c) {
                    row_kept[r] = true;
                    col_kept[c] = true;
                }
            }
        }
        (row_kept, col_kept)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Weight {
        row_ptr: Vec<u32>,
        col_idx: Vec<u16>,
        values: Vec<i16>,
    },
    Block {
        width: usize,
        row_ptr: Vec<u32>,
        block_idx: Vec<u16>,
        values: Vec<i16>,
    },
    Unit {
        kept_rows: Vec<u16>,
        kept_cols: Vec<u16>,
        values: Vec<i16>,
    },
}

/// A pruned weight matrix in one of the three encodings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    format: QuantFormat,
    payload: Payload,
}

impl SparseMatrix {
    /// Encode `dense` (row major, `rows x cols`) keeping the entries selected
    /// by `mask`. Kept entries that are zero are not stored, nor are blocks
    /// or rows that end up entirely zero.
    pub fn encode(
        dense: &QuantTensor,
        mask: &PruneMask,
        structure: SparsityStructure,
    ) -> Result<Self, Error> {
        let (rows, cols) = match *dense.shape() {
            [r, c] => (r, c),
            _ => return Err(Error::InvalidStructure("encode expects a 2-D tensor")),
        };
        if mask.rows != rows || mask.cols != cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: mask.rows * mask.cols,
            });
        }
        if rows > u16::MAX as usize + 1 || cols > u16::MAX as usize + 1 {
            return Err(Error::InvalidStructure("matrix dimension exceeds 16-bit indices"));
        }
        mask.check_structure(structure)?;
        let data = dense.data();
        let kept = |r: usize, c: usize| mask.get(r, c) && data[r * cols + c] != 0;

        let payload = match structure {
            SparsityStructure::Weight => {
                let mut row_ptr = Vec::with_capacity(rows + 1);
                let mut col_idx = Vec::new();
                let mut values = Vec::new();
                row_ptr.push(0);
                for r in 0..rows {
                    for c in 0..cols {
                        if kept(r, c) {
                            col_idx.push(c as u16);
                            values.push(data[r * cols + c]);
                        }
                    }
                    row_ptr.push(values.len() as u32);
                }
                Payload::Weight {
                    row_ptr,
                    col_idx,
                    values,
                }
            }
            SparsityStructure::Block { width } => {
                let mut row_ptr = Vec::with_capacity(rows + 1);
                let mut block_idx = Vec::new();
                let mut values = Vec::new();
                row_ptr.push(0);
                for r in 0..rows {
                    for (b, start) in (0..cols).step_by(width).enumerate() {
                        let end = (start + width).min(cols);
                        if (start..end).any(|c| kept(r, c)) {
                            block_idx.push(b as u16);
                            values.extend_from_slice(&data[r * cols + start..r * cols + end]);
                        }
                    }
                    row_ptr.push(block_idx.len() as u32);
                }
                Payload::Block {
                    width,
                    row_ptr,
                    block_idx,
                    values,
                }
            }
            SparsityStructure::Unit => {
                let (row_kept, col_kept) = mask.factor();
                let kept_cols: Vec<u16> = (0..cols)
                    .filter(|&c| col_kept[c])
                    .map(|c| c as u16)
                    .collect();
                let kept_rows: Vec<u16> = (0..rows)
                    .filter(|&r| row_kept[r] && kept_cols.iter().any(|&c| kept(r, c as usize)))
                    .map(|r| r as u16)
                    .collect();
                let mut values = Vec::with_capacity(kept_rows.len() * kept_cols.len());
                for &r in &kept_rows {
                    for &c in &kept_cols {
                        values.push(data[r as usize * cols + c as usize]);
                    }
                }
                Payload::Unit {
                    kept_rows,
                    kept_cols,
                    values,
                }
            }
        };
        Ok(SparseMatrix {
            rows,
            cols,
            format: dense.format(),
            payload,
        })
    }

    /// Assemble from raw parts, validating every payload invariant.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        format: QuantFormat,
        payload: Payload,
    ) -> Result<Self, Error> {
        let m = SparseMatrix {
            rows,
            cols,
            format,
            payload,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<(), Error> {
        let bad = |what| Err(Error::InvalidStructure(what));
        let check_codes = |values: &[i16]| {
            values
                .iter()
                .all(|&v| self.format.contains(v as i32))
        };
        let check_ptr = |row_ptr: &[u32], total: usize| {
            row_ptr.len() == self.rows + 1
                && row_ptr[0] == 0
                && row_ptr.windows(2).all(|w| w[0] <= w[1])
                && *row_ptr.last().unwrap() as usize == total
        };
        match &self.payload {
            Payload::Weight {
                row_ptr,
                col_idx,
                values,
            } => {
                if col_idx.len() != values.len() || !check_ptr(row_ptr, values.len()) {
                    return bad("weight payload pointers");
                }
                for r in 0..self.rows {
                    let idx = &col_idx[row_ptr[r] as usize..row_ptr[r + 1] as usize];
                    if idx.windows(2).any(|w| w[0] >= w[1])
                        || idx.last().is_some_and(|&c| c as usize >= self.cols)
                    {
                        return bad("weight column indices");
                    }
                }
                if values.contains(&0) {
                    return bad("weight payload stores a zero");
                }
                if !check_codes(values) {
                    return bad("weight value out of range");
                }
            }
            Payload::Block {
                width,
                row_ptr,
                block_idx,
                values,
            } => {
                let width = *width;
                if width == 0 || !check_ptr(row_ptr, block_idx.len()) {
                    return bad("block payload pointers");
                }
                let nblocks = self.cols.div_ceil(width);
                let mut expected_values = 0;
                for r in 0..self.rows {
                    let idx = &block_idx[row_ptr[r] as usize..row_ptr[r + 1] as usize];
                    if idx.windows(2).any(|w| w[0] >= w[1])
                        || idx.last().is_some_and(|&b| b as usize >= nblocks)
                    {
                        return bad("block indices");
                    }
                    expected_values += idx
                        .iter()
                        .map(|&b| block_len(b as usize, width, self.cols))
                        .sum::<usize>();
                }
                if values.len() != expected_values {
                    return bad("block payload length");
                }
                let mut offset = 0;
                for &b in block_idx {
                    let len = block_len(b as usize, width, self.cols);
                    if values[offset..offset + len].iter().all(|&v| v == 0) {
                        return bad("block payload stores an all-zero block");
                    }
                    offset += len;
                }
                if !check_codes(values) {
                    return bad("block value out of range");
                }
            }
            Payload::Unit {
                kept_rows,
                kept_cols,
                values,
            } => {
                let increasing = |v: &[u16], bound: usize| {
                    v.windows(2).all(|w| w[0] < w[1]) && v.last().is_none_or(|&x| (x as usize) < bound)
                };
                if !increasing(kept_rows, self.rows) || !increasing(kept_cols, self.cols) {
                    return bad("unit index lists");
                }
                if values.len() != kept_rows.len() * kept_cols.len() {
                    return bad("unit payload length");
                }
                if !kept_cols.is_empty()
                    && values.chunks(kept_cols.len()).any(|row| row.iter().all(|&v| v == 0))
                {
                    return bad("unit payload stores an all-zero row");
                }
                if !check_codes(values) {
                    return bad("unit value out of range");
                }
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn format(&self) -> QuantFormat {
        self.format
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn structure(&self) -> SparsityStructure {
        match self.payload {
            Payload::Weight { .. } => SparsityStructure::Weight,
            Payload::Block { width, .. } => SparsityStructure::Block { width },
            Payload::Unit { .. } => SparsityStructure::Unit,
        }
    }

    /// Number of weight positions that hold a stored value.
    pub fn stored(&self) -> usize {
        match &self.payload {
            Payload::Weight { values, .. }
            | Payload::Block { values, .. }
            | Payload::Unit { values, .. } => values.len(),
        }
    }

    /// Fraction of the `rows x cols` positions that are pruned.
    pub fn sparsity(&self) -> f64 {
        let total = self.rows * self.cols;
        if total == 0 {
            return 0.0;
        }
        (total - self.stored()) as f64 / total as f64
    }

    /// Index metadata bytes on top of the stored values.
    pub fn index_bytes(&self) -> usize {
        match &self.payload {
            Payload::Weight {
                row_ptr, col_idx, ..
            } => row_ptr.len() * 4 + col_idx.len() * 2,
            Payload::Block {
                row_ptr, block_idx, ..
            } => row_ptr.len() * 4 + block_idx.len() * 2,
            Payload::Unit {
                kept_rows,
                kept_cols,
                ..
            } => {
                let cols = if kept_cols.len() == self.cols {
                    0
                } else {
                    kept_cols.len()
                };
                (kept_rows.len() + cols) * 2
            }
        }
    }

    /// Kept row indices, for the unit encoding.
    pub fn kept_rows(&self) -> Option<&[u16]> {
        match &self.payload {
            Payload::Unit { kept_rows, .. } => Some(kept_rows),
            _ => None,
        }
    }

    /// Dense row-major reconstruction with pruned entries zeroed.
    pub fn decode(&self) -> Vec<i16> {
        let mut out = vec![0i16; self.rows * self.cols];
        let cols = self.cols;
        match &self.payload {
            Payload::Weight {
                row_ptr,
                col_idx,
                values,
            } => {
                for r in 0..self.rows {
                    for k in row_ptr[r] as usize..row_ptr[r + 1] as usize {
                        out[r * cols + col_idx[k] as usize] = values[k];
                    }
                }
            }
            Payload::Block {
                width,
                row_ptr,
                block_idx,
                values,
            } => {
                let mut offset = 0;
                for r in 0..self.rows {
                    for &b in &block_idx[row_ptr[r] as usize..row_ptr[r + 1] as usize] {
                        let start = b as usize * width;
                        let len = block_len(b as usize, *width, cols);
                        out[r * cols + start..r * cols + start + len]
                            .copy_from_slice(&values[offset..offset + len]);
                        offset += len;
                    }
                }
            }
            Payload::Unit {
                kept_rows,
                kept_cols,
                values,
            } => {
                let n = kept_cols.len();
                for (i, &r) in kept_rows.iter().enumerate() {
                    for (j, &c) in kept_cols.iter().enumerate() {
                        out[r as usize * cols + c as usize] = values[i * n + j];
                    }
                }
            }
        }
        out
    }

    /// Add `W x` into `acc` (raw products, no rescaling).
    ///
    /// Returns the number of MAC groups executed: one per stored weight for
    /// `Weight`, one per stored block for `Block`, one per stored row for
    /// `Unit`.
    pub fn accumulate(&self, x: &[i16], acc: &mut [Accumulator]) -> usize {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(acc.len(), self.rows);
        match &self.payload {
            Payload::Weight {
                row_ptr,
                col_idx,
                values,
            } => {
                for (r, a) in acc.iter_mut().enumerate() {
                    let span = row_ptr[r] as usize..row_ptr[r + 1] as usize;
                    *a = col_idx[span.clone()]
                        .iter()
                        .zip(&values[span])
                        .fold(*a, |a, (&c, &w)| a.mac(w as i32, x[c as usize] as i32));
                }
                values.len()
            }
            Payload::Block {
                width,
                row_ptr,
                block_idx,
                values,
            } => {
                let width = *width;
                let mut offset = 0;
                for (r, a) in acc.iter_mut().enumerate() {
                    for &b in &block_idx[row_ptr[r] as usize..row_ptr[r + 1] as usize] {
                        let start = b as usize * width;
                        let len = block_len(b as usize, width, self.cols);
                        *a = values[offset..offset + len]
                            .iter()
                            .zip(&x[start..start + len])
                            .fold(*a, |a, (&w, &v)| a.mac(w as i32, v as i32));
                        offset += len;
                    }
                }
                block_idx.len()
            }
            Payload::Unit {
                kept_rows,
                kept_cols,
                values,
            } => {
                let n = kept_cols.len();
                if n == 0 {
                    return 0;
                }
                for (&r, row) in kept_rows.iter().zip(values.chunks_exact(n)) {
                    let a = &mut acc[r as usize];
                    *a = row
                        .iter()
                        .zip(kept_cols)
                        .fold(*a, |a, (&w, &c)| a.mac(w as i32, x[c as usize] as i32));
                }
                kept_rows.len()
            }
        }
    }

    /// Scalar multiply-accumulates executed by one matvec.
    pub fn macs(&self) -> usize {
        match &self.payload {
            Payload::Weight { values, .. } => values.len(),
            // A partial trailing block still occupies a full MAC cycle.
            Payload::Block {
                width, block_idx, ..
            } => block_idx.len() * width,
            Payload::Unit { values, .. } => values.len(),
        }
    }

    /// Sparse matrix times vector, rescaled into `out_fmt`.
    pub fn spmv(&self, x: &QuantTensor, out_fmt: QuantFormat) -> Result<QuantTensor, Error> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: x.len(),
            });
        }
        let mut acc = vec![Accumulator::ZERO; self.rows];
        self.accumulate(x.data(), &mut acc);
        let frac = self.format.frac_bits() + x.format().frac_bits();
        let out = acc
            .iter()
            .map(|a| rescale(a.0 as i64, frac, out_fmt) as i16)
            .collect();
        QuantTensor::vector(out, out_fmt)
    }
}

#[inline]
fn block_len(block: usize, width: usize, cols: usize) -> usize {
    width.min(cols - block * width)
}

/// Row-major dense integer matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    format: QuantFormat,
    data: Vec<i16>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, format: QuantFormat, data: Vec<i16>) -> Result<Self, Error> {
        let t = QuantTensor::new(data, vec![rows, cols], format)?;
        Ok(DenseMatrix {
            rows,
            cols,
            format,
            data: t.into_data(),
        })
    }

    pub fn zeros(rows: usize, cols: usize, format: QuantFormat) -> Self {
        DenseMatrix {
            rows,
            cols,
            format,
            data: vec![0; rows * cols],
        }
    }

    pub fn data(&self) -> &[i16] {
        &self.data
    }

    pub fn to_tensor(&self) -> QuantTensor {
        QuantTensor::new(self.data.clone(), vec![self.rows, self.cols], self.format)
            .expect("dense matrix invariants hold")
    }

    pub fn accumulate(&self, x: &[i16], acc: &mut [Accumulator]) -> usize {
        debug_assert_eq!(x.len(), self.cols);
        for (a, row) in acc.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *a = row
                .iter()
                .zip(x)
                .fold(*a, |a, (&w, &v)| a.mac(w as i32, v as i32));
        }
        self.rows
    }
}

/// A layer weight matrix: dense or sparse-encoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerMatrix {
    Dense(DenseMatrix),
    Sparse(SparseMatrix),
}

impl LayerMatrix {
    pub fn rows(&self) -> usize {
        match self {
            LayerMatrix::Dense(m) => m.rows,
            LayerMatrix::Sparse(m) => m.rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            LayerMatrix::Dense(m) => m.cols,
            LayerMatrix::Sparse(m) => m.cols,
        }
    }

    pub fn format(&self) -> QuantFormat {
        match self {
            LayerMatrix::Dense(m) => m.format,
            LayerMatrix::Sparse(m) => m.format,
        }
    }

    pub fn len(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn decode(&self) -> Vec<i16> {
        match self {
            LayerMatrix::Dense(m) => m.data.clone(),
            LayerMatrix::Sparse(m) => m.decode(),
        }
    }

    pub fn to_dense_tensor(&self) -> QuantTensor {
        QuantTensor::new(self.decode(), vec![self.rows(), self.cols()], self.format())
            .expect("layer matrix invariants hold")
    }

    pub fn accumulate(&self, x: &[i16], acc: &mut [Accumulator]) -> usize {
        match self {
            LayerMatrix::Dense(m) => m.accumulate(x, acc),
            LayerMatrix::Sparse(m) => m.accumulate(x, acc),
        }
    }

    pub fn macs(&self) -> usize {
        match self {
            LayerMatrix::Dense(m) => m.rows * m.cols,
            LayerMatrix::Sparse(m) => m.macs(),
        }
    }

    pub fn stored(&self) -> usize {
        match self {
            LayerMatrix::Dense(m) => m.data.len(),
            LayerMatrix::Sparse(m) => m.stored(),
        }
    }

    pub fn index_bytes(&self) -> usize {
        match self {
            LayerMatrix::Dense(_) => 0,
            LayerMatrix::Sparse(m) => m.index_bytes(),
        }
    }

    pub fn structure(&self) -> Option<SparsityStructure> {
        match self {
            LayerMatrix::Dense(_) => None,
            LayerMatrix::Sparse(m) => Some(m.structure()),
        }
    }

    /// Keep/prune picture of the stored positions.
    pub fn stored_mask(&self) -> PruneMask {
        match self {
            LayerMatrix::Dense(m) => PruneMask::all(m.rows, m.cols, true),
            LayerMatrix::Sparse(m) => {
                let mut mask = PruneMask::all(m.rows, m.cols, false);
                let cols = m.cols;
                match &m.payload {
                    Payload::Weight {
                        row_ptr, col_idx, ..
                    } => {
                        for r in 0..m.rows {
                            for &c in &col_idx[row_ptr[r] as usize..row_ptr[r + 1] as usize] {
                                mask.set(r, c as usize, true);
                            }
                        }
                    }
                    Payload::Block {
                        width,
                        row_ptr,
                        block_idx,
                        ..
                    } => {
                        for r in 0..m.rows {
                            for &b in &block_idx[row_ptr[r] as usize..row_ptr[r + 1] as usize] {
                                let start = b as usize * width;
                                for c in start..start + block_len(b as usize, *width, cols) {
                                    mask.set(r, c, true);
                                }
                            }
                        }
                    }
                    Payload::Unit {
                        kept_rows,
                        kept_cols,
                        ..
                    } => {
                        for &r in kept_rows {
                            for &c in kept_cols {
                                mask.set(r as usize, c as usize, true);
                            }
                        }
                    }
                }
                mask
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::{Q16, Q8};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_oracle(w: &[i16], rows: usize, cols: usize, x: &[i16]) -> Vec<i64> {
        (0..rows)
            .map(|r| {
                (0..cols)
                    .map(|c| w[r * cols + c] as i64 * x[c] as i64)
                    .sum()
            })
            .collect()
    }

    fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fmt: QuantFormat) -> QuantTensor {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(fmt.min_code()..=fmt.max_code()) as i16)
            .collect();
        QuantTensor::new(data, vec![rows, cols], fmt).unwrap()
    }

    fn random_mask(
        rng: &mut ChaCha8Rng,
        rows: usize,
        cols: usize,
        structure: SparsityStructure,
    ) -> PruneMask {
        let p: f64 = rng.gen();
        match structure {
            SparsityStructure::Weight => {
                PruneMask::from_bits(rows, cols, (0..rows * cols).map(|_| rng.gen_bool(p)).collect())
                    .unwrap()
            }
            SparsityStructure::Block { width } => {
                let mut m = PruneMask::all(rows, cols, true);
                for r in 0..rows {
                    for start in (0..cols).step_by(width) {
                        if !rng.gen_bool(p) {
                            for c in start..(start + width).min(cols) {
                                m.set(r, c, false);
                            }
                        }
                    }
                }
                m
            }
            SparsityStructure::Unit => {
                let mut m = PruneMask::all(rows, cols, true);
                for r in 0..rows {
                    if !rng.gen_bool(p) {
                        m.prune_row(r);
                    }
                }
                if rng.gen_bool(0.5) {
                    for c in 0..cols {
                        if !rng.gen_bool(p) {
                            m.prune_col(c);
                        }
                    }
                }
                m
            }
        }
    }

    fn masked(t: &QuantTensor, m: &PruneMask) -> Vec<i16> {
        t.data()
            .iter()
            .zip(m.bits())
            .map(|(&v, &k)| if k { v } else { 0 })
            .collect()
    }

    const STRUCTURES: [SparsityStructure; 4] = [
        SparsityStructure::Weight,
        SparsityStructure::block(),
        SparsityStructure::Block { width: 4 },
        SparsityStructure::Unit,
    ];

    #[test]
    fn all_true_mask_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = QuantTensor::new(
            (0..64).map(|_| rng.gen_range(1..=127) as i16).collect(),
            vec![8, 8],
            Q8,
        )
        .unwrap();
        for s in STRUCTURES {
            let m = SparseMatrix::encode(&t, &PruneMask::all(8, 8, true), s).unwrap();
            assert_eq!(m.sparsity(), 0.0);
            assert_eq!(m.decode(), t.data());
        }
    }

    #[test]
    fn all_false_mask_is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_tensor(&mut rng, 5, 9, Q8);
        for s in STRUCTURES {
            let m = SparseMatrix::encode(&t, &PruneMask::all(5, 9, false), s).unwrap();
            assert_eq!(m.stored(), 0);
            assert_eq!(m.sparsity(), 1.0);
            assert!(m.decode().iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn block_aligned_16x16_decodes_to_masked_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let t = random_tensor(&mut rng, 16, 16, Q8);
            let mask = random_mask(&mut rng, 16, 16, SparsityStructure::block());
            let m = SparseMatrix::encode(&t, &mask, SparsityStructure::block()).unwrap();
            assert_eq!(m.decode(), masked(&t, &mask));
        }
    }

    #[test]
    fn rejects_half_pruned_block() {
        let t = QuantTensor::zeros(vec![2, 16], Q8);
        let mut mask = PruneMask::all(2, 16, true);
        mask.set(0, 3, false);
        assert_eq!(
            SparseMatrix::encode(&t, &mask, SparsityStructure::block()),
            Err(Error::InconsistentMask("block"))
        );
        // The same mask is fine for unstructured pruning.
        assert!(SparseMatrix::encode(&t, &mask, SparsityStructure::Weight).is_ok());
    }

    #[test]
    fn rejects_non_factorable_unit_mask() {
        let t = QuantTensor::zeros(vec![3, 3], Q8);
        let mut mask = PruneMask::all(3, 3, true);
        mask.set(1, 1, false);
        assert_eq!(
            SparseMatrix::encode(&t, &mask, SparsityStructure::Unit),
            Err(Error::InconsistentMask("unit"))
        );
    }

    #[test]
    fn sparsity_examples() {
        let t = QuantTensor::new(vec![1; 32], vec![4, 8], Q8).unwrap();
        let mut mask = PruneMask::all(4, 8, true);
        mask.prune_row(2);
        let m = SparseMatrix::encode(&t, &mask, SparsityStructure::block()).unwrap();
        assert_eq!(m.sparsity(), 0.25);

        let t = QuantTensor::new(vec![3; 40], vec![10, 4], Q8).unwrap();
        let mut mask = PruneMask::all(10, 4, true);
        for r in [0, 4, 9] {
            mask.prune_row(r);
        }
        let m = SparseMatrix::encode(&t, &mask, SparsityStructure::Unit).unwrap();
        assert!((m.sparsity() - 0.3).abs() < 1e-12);
        assert_eq!(m.kept_rows().unwrap(), &[1, 2, 3, 5, 6, 7, 8]);
    }

    #[test]
    fn zero_vector_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = random_tensor(&mut rng, 6, 10, Q8);
        let x = QuantTensor::zeros(vec![10], Q8);
        for s in STRUCTURES {
            let mask = random_mask(&mut rng, 6, 10, s);
            let m = SparseMatrix::encode(&t, &mask, s).unwrap();
            let y = m.spmv(&x, Q8).unwrap();
            assert!(y.data().iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn identity_pattern_passes_input_through() {
        // 127/128 on the diagonal: y = x * 127/128, rounded half-even.
        let n = 12;
        let mut data = vec![0i16; n * n];
        for i in 0..n {
            data[i * n + i] = 127;
        }
        let t = QuantTensor::new(data, vec![n, n], Q8).unwrap();
        let mut mask = PruneMask::all(n, n, false);
        for i in 0..n {
            mask.set(i, i, true);
        }
        let m = SparseMatrix::encode(&t, &mask, SparsityStructure::Weight).unwrap();
        let xs: Vec<i16> = (0..n as i16).map(|i| i * 10 - 60).collect();
        let y = m
            .spmv(&QuantTensor::vector(xs.clone(), Q8).unwrap(), Q8)
            .unwrap();
        for (&yi, &xi) in y.data().iter().zip(&xs) {
            assert!((yi - xi).abs() <= 1, "{yi} vs {xi}");
        }
    }

    #[test]
    fn spmv_rejects_wrong_length() {
        let t = QuantTensor::zeros(vec![3, 4], Q8);
        let m = SparseMatrix::encode(&t, &PruneMask::all(3, 4, true), SparsityStructure::Weight)
            .unwrap();
        let x = QuantTensor::zeros(vec![5], Q8);
        assert_eq!(
            m.spmv(&x, Q8).unwrap_err(),
            Error::DimensionMismatch {
                expected: 4,
                found: 5
            }
        );
    }

    #[test]
    fn spmv_matches_dense_oracle_100_per_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for s in STRUCTURES {
            for _ in 0..100 {
                let rows = rng.gen_range(1..40);
                let cols = rng.gen_range(1..40);
                let fmt = if rng.gen_bool(0.2) { Q16 } else { Q8 };
                let t = random_tensor(&mut rng, rows, cols, fmt);
                let mask = random_mask(&mut rng, rows, cols, s);
                let m = SparseMatrix::encode(&t, &mask, s).unwrap();
                let x = random_tensor(&mut rng, 1, cols, Q8);
                let x = QuantTensor::vector(x.data().to_vec(), Q8).unwrap();
                let y = m.spmv(&x, Q8).unwrap();
                let oracle = dense_oracle(&masked(&t, &mask), rows, cols, x.data());
                let frac = fmt.frac_bits() + 7;
                for (got, want) in y.data().iter().zip(oracle) {
                    assert_eq!(*got as i32, rescale(want, frac, Q8));
                }
            }
        }
    }

    #[test]
    fn block_kernel_executes_one_group_per_stored_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let rows = rng.gen_range(1..20);
            let cols = rng.gen_range(1..50);
            let t = random_tensor(&mut rng, rows, cols, Q8);
            let mask = random_mask(&mut rng, rows, cols, SparsityStructure::block());
            let m = SparseMatrix::encode(&t, &mask, SparsityStructure::block()).unwrap();
            let stored_blocks = match m.payload() {
                Payload::Block { block_idx, .. } => block_idx.len(),
                _ => unreachable!(),
            };
            let mut acc = vec![Accumulator::ZERO; rows];
            let x = vec![1i16; cols];
            assert_eq!(m.accumulate(&x, &mut acc), stored_blocks);
        }
    }

    #[test]
    fn padding_is_never_stored() {
        // 3 x 10 with width 8: each row has one full block and one 2-wide block.
        let t = QuantTensor::new(vec![5; 30], vec![3, 10], Q8).unwrap();
        let m = SparseMatrix::encode(&t, &PruneMask::all(3, 10, true), SparsityStructure::block())
            .unwrap();
        assert_eq!(m.stored(), 30);
        assert_eq!(m.macs(), 6 * 8);
    }

    #[test]
    fn from_parts_rejects_bad_payloads() {
        let bad = Payload::Weight {
            row_ptr: vec![0, 2],
            col_idx: vec![3, 1],
            values: vec![1, 1],
        };
        assert!(SparseMatrix::from_parts(1, 4, Q8, bad).is_err());
        let zero = Payload::Weight {
            row_ptr: vec![0, 1],
            col_idx: vec![1],
            values: vec![0],
        };
        assert!(SparseMatrix::from_parts(1, 4, Q8, zero).is_err());
        let good = Payload::Block {
            width: 8,
            row_ptr: vec![0, 1],
            block_idx: vec![1],
            values: vec![1, 2],
        };
        assert!(SparseMatrix::from_parts(1, 10, Q8, good).is_ok());
    }

    #[test]
    fn stored_mask_matches_decode_nonzeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for s in STRUCTURES {
            let t = random_tensor(&mut rng, 9, 17, Q8);
            let mask = random_mask(&mut rng, 9, 17, s);
            let m = LayerMatrix::Sparse(SparseMatrix::encode(&t, &mask, s).unwrap());
            let stored = m.stored_mask();
            for (i, &v) in m.decode().iter().enumerate() {
                if v != 0 {
                    assert!(stored.bits()[i]);
                }
                if stored.bits()[i] {
                    assert!(mask.bits()[i]);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn encode_decode_is_lossless_on_kept(seed in any::<u64>(), which in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = STRUCTURES[which];
            let rows = rng.gen_range(1..24);
            let cols = rng.gen_range(1..24);
            let t = random_tensor(&mut rng, rows, cols, Q8);
            let mask = random_mask(&mut rng, rows, cols, s);
            let m = SparseMatrix::encode(&t, &mask, s).unwrap();
            prop_assert_eq!(m.decode(), masked(&t, &mask));
            let rebuilt = SparseMatrix::from_parts(rows, cols, Q8, m.payload().clone());
            prop_assert_eq!(rebuilt, Ok(m));
        }
    }
}
