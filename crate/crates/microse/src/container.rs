//! The `.ssem` binary model container.
//!
//! Byte layout is documented in `docs/container.md`. Every multi-byte
//! integer is little-endian. Writing is canonical: the same model always
//! produces the same bytes.

use std::io::{Read, Write};
use std::path::Path;

use microse_core::dsp::{DspConfig, MelFilterbank, QeqParams, Window};
use microse_core::engine::{Activation, DenseLayer, LstmLayer, SeModel};
use microse_core::sparse::{DenseMatrix, Payload, SparseMatrix};
use microse_core::{LayerMatrix, QuantFormat, Q16, Q8};

pub const MAGIC: [u8; 4] = *b"SSEM";
pub const VERSION: u16 = 1;
/// Magic, version, reserved, body length.
pub const PREAMBLE_LEN: usize = 12;
pub const CRC_LEN: usize = 4;
/// Fixed part of the body before the layer table.
const HEADER_LEN: usize = 32;
const LAYER_ENTRY_LEN: usize = 12;
const LAYER_COUNT: usize = 4;

const KIND_LSTM: u8 = 1;
const KIND_DENSE: u8 = 2;

const ENC_DENSE: u8 = 0;
const ENC_WEIGHT: u8 = 1;
const ENC_BLOCK: u8 = 2;
const ENC_UNIT: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:02x?} (expected \"SSEM\")")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0} (this build reads version {VERSION})")]
    UnsupportedVersion(u16),
    #[error("truncated container: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("CRC mismatch: stored {stored:08x}, computed {computed:08x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("layer shapes do not chain: {0}")]
    ShapeChain(microse_core::Error),
    #[error("malformed container: {0}")]
    Malformed(String),
}

fn malformed(msg: impl Into<String>) -> ContainerError {
    ContainerError::Malformed(msg.into())
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn len_u32(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("container sizes fit in 32 bits"));
    }
    fn f32s(&mut self, v: &[f32]) {
        for x in v {
            self.buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn u16s(&mut self, v: &[u16]) {
        for &x in v {
            self.u16(x);
        }
    }
    fn u32s(&mut self, v: &[u32]) {
        for &x in v {
            self.u32(x);
        }
    }
    /// Values at the storage width of `fmt`.
    fn codes(&mut self, v: &[i16], fmt: QuantFormat) {
        for &x in v {
            if fmt == Q8 {
                self.buf.push(x as i8 as u8);
            } else {
                self.buf.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    /// Offset of `data[0]` in the file, for error messages.
    base: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        match end {
            Some(end) => {
                let s = &self.data[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(ContainerError::Truncated {
                needed: self.base + self.pos.saturating_add(n),
                available: self.base + self.data.len(),
            }),
        }
    }
    fn u8(&mut self) -> Result<u8, ContainerError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, ContainerError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize, ContainerError> {
        Ok(self.u32()? as usize)
    }
    fn f64(&mut self) -> Result<f64, ContainerError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn count(&self, n: usize, width: usize) -> Result<usize, ContainerError> {
        n.checked_mul(width).ok_or_else(|| malformed("element count overflows"))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, ContainerError> {
        let b = self.take(self.count(n, 4)?)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn u16s(&mut self, n: usize) -> Result<Vec<u16>, ContainerError> {
        let b = self.take(self.count(n, 2)?)?;
        Ok(b.chunks_exact(2)
            .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn u32s(&mut self, n: usize) -> Result<Vec<u32>, ContainerError> {
        let b = self.take(self.count(n, 4)?)?;
        Ok(b.chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn codes(&mut self, n: usize, fmt: QuantFormat) -> Result<Vec<i16>, ContainerError> {
        if fmt == Q8 {
            Ok(self.take(n)?.iter().map(|&b| b as i8 as i16).collect())
        } else {
            let b = self.take(self.count(n, 2)?)?;
            Ok(b.chunks_exact(2)
                .map(|c| i16::from_le_bytes(c.try_into().unwrap()))
                .collect())
        }
    }
}

fn format_from_bits(bits: u8) -> Result<QuantFormat, ContainerError> {
    QuantFormat::new(bits).map_err(|_| malformed(format!("unsupported quantization width {bits}")))
}

fn write_matrix(w: &mut Writer, m: &LayerMatrix) {
    let fmt = m.format();
    let (enc, width) = match m {
        LayerMatrix::Dense(_) => (ENC_DENSE, 0),
        LayerMatrix::Sparse(s) => match s.payload() {
            Payload::Weight { .. } => (ENC_WEIGHT, 0),
            Payload::Block { width, .. } => (ENC_BLOCK, *width as u16),
            Payload::Unit { .. } => (ENC_UNIT, 0),
        },
    };
    w.u8(enc);
    w.u8(fmt.bits() as u8);
    w.u16(width);
    w.len_u32(m.rows());
    w.len_u32(m.cols());
    match m {
        LayerMatrix::Dense(d) => w.codes(d.data(), fmt),
        LayerMatrix::Sparse(s) => match s.payload() {
            Payload::Weight {
                row_ptr,
                col_idx,
                values,
            } => {
                w.len_u32(values.len());
                w.u32s(row_ptr);
                w.u16s(col_idx);
                w.codes(values, fmt);
            }
            Payload::Block {
                row_ptr,
                block_idx,
                values,
                ..
            } => {
                w.len_u32(block_idx.len());
                w.len_u32(values.len());
                w.u32s(row_ptr);
                w.u16s(block_idx);
                w.codes(values, fmt);
            }
            Payload::Unit {
                kept_rows,
                kept_cols,
                values,
            } => {
                w.len_u32(kept_rows.len());
                w.len_u32(kept_cols.len());
                w.u16s(kept_rows);
                w.u16s(kept_cols);
                w.codes(values, fmt);
            }
        },
    }
}

fn read_matrix(r: &mut Reader, rows: usize, cols: usize, expect: QuantFormat) -> Result<LayerMatrix, ContainerError> {
    let enc = r.u8()?;
    let fmt = format_from_bits(r.u8()?)?;
    let width = r.u16()? as usize;
    let (mr, mc) = (r.usize()?, r.usize()?);
    if (mr, mc) != (rows, cols) {
        return Err(ContainerError::ShapeChain(microse_core::Error::DimensionMismatch {
            expected: rows * cols,
            found: mr.saturating_mul(mc),
        }));
    }
    if fmt != expect {
        return Err(malformed(format!(
            "matrix stored at {} bits where {} bits are required",
            fmt.bits(),
            expect.bits()
        )));
    }
    if enc != ENC_BLOCK && width != 0 {
        return Err(malformed("block width set on a non-block matrix"));
    }
    let payload = match enc {
        ENC_DENSE => {
            let data = r.codes(r.count(rows, cols)?, fmt)?;
            let m = DenseMatrix::new(rows, cols, fmt, data).map_err(|e| malformed(e.to_string()))?;
            return Ok(LayerMatrix::Dense(m));
        }
        ENC_WEIGHT => {
            let nnz = r.usize()?;
            Payload::Weight {
                row_ptr: r.u32s(rows + 1)?,
                col_idx: r.u16s(nnz)?,
                values: r.codes(nnz, fmt)?,
            }
        }
        ENC_BLOCK => {
            let blocks = r.usize()?;
            let nvalues = r.usize()?;
            Payload::Block {
                width,
                row_ptr: r.u32s(rows + 1)?,
                block_idx: r.u16s(blocks)?,
                values: r.codes(nvalues, fmt)?,
            }
        }
        ENC_UNIT => {
            let (nr, nc) = (r.usize()?, r.usize()?);
            Payload::Unit {
                kept_rows: r.u16s(nr)?,
                kept_cols: r.u16s(nc)?,
                values: r.codes(r.count(nr, nc)?, fmt)?,
            }
        }
        other => return Err(malformed(format!("unknown matrix encoding {other}"))),
    };
    SparseMatrix::from_parts(rows, cols, fmt, payload)
        .map(LayerMatrix::Sparse)
        .map_err(|e| malformed(format!("invalid sparse payload: {e}")))
}

fn write_lstm(w: &mut Writer, l: &LstmLayer) {
    w.len_u32(l.input_size);
    w.len_u32(l.hidden_size);
    for m in l.matrices() {
        write_matrix(w, m);
    }
    for b in &l.bias {
        w.codes(b, Q8);
    }
}

fn read_lstm(r: &mut Reader) -> Result<LstmLayer, ContainerError> {
    let input = r.usize()?;
    let hidden = r.usize()?;
    let mut l = LstmLayer::zeros(0, 0);
    l.input_size = input;
    l.hidden_size = hidden;
    for m in l.w_x.iter_mut() {
        *m = read_matrix(r, hidden, input, Q8)?;
    }
    for m in l.w_h.iter_mut() {
        *m = read_matrix(r, hidden, hidden, Q8)?;
    }
    for b in l.bias.iter_mut() {
        *b = r.codes(hidden, Q8)?;
    }
    Ok(l)
}

fn write_dense(w: &mut Writer, d: &DenseLayer) {
    w.len_u32(d.inputs());
    w.len_u32(d.outputs());
    w.u8(match d.activation {
        Activation::Tanh => 0,
        Activation::Sigmoid => 1,
    });
    w.u8(d.format().bits() as u8);
    w.u16(0);
    write_matrix(w, &d.weights);
    w.codes(&d.bias, d.format());
}

fn read_dense(r: &mut Reader) -> Result<DenseLayer, ContainerError> {
    let inputs = r.usize()?;
    let outputs = r.usize()?;
    let activation = match r.u8()? {
        0 => Activation::Tanh,
        1 => Activation::Sigmoid,
        a => return Err(malformed(format!("unknown activation {a}"))),
    };
    let fmt = format_from_bits(r.u8()?)?;
    if r.u16()? != 0 {
        return Err(malformed("nonzero reserved field in dense record"));
    }
    let weights = read_matrix(r, outputs, inputs, fmt)?;
    let bias = r.codes(outputs, fmt)?;
    Ok(DenseLayer {
        weights,
        bias,
        activation,
    })
}

/// Serialize a model to container bytes.
pub fn to_bytes(model: &SeModel) -> Result<Vec<u8>, ContainerError> {
    model.validate().map_err(ContainerError::ShapeChain)?;
    let dsp = &model.dsp;
    let mut layers: Vec<(u8, Vec<u8>)> = Vec::new();
    for l in &model.lstm {
        let mut w = Writer { buf: Vec::new() };
        write_lstm(&mut w, l);
        layers.push((KIND_LSTM, w.buf));
    }
    for d in &model.dense {
        let mut w = Writer { buf: Vec::new() };
        write_dense(&mut w, d);
        layers.push((KIND_DENSE, w.buf));
    }

    let mut body = Writer { buf: Vec::new() };
    body.len_u32(dsp.sample_rate as usize);
    body.len_u32(dsp.frame_size);
    body.len_u32(dsp.hop_size);
    body.len_u32(dsp.mel_bins);
    body.len_u32(dsp.freq_bins());
    body.buf.extend_from_slice(&dsp.power_exponent.to_le_bytes());
    body.u8(dsp.window.code());
    body.u8(LAYER_COUNT as u8);
    body.u16(0);
    debug_assert_eq!(body.buf.len(), HEADER_LEN);
    let mut offset = HEADER_LEN + LAYER_COUNT * LAYER_ENTRY_LEN + 4 * dsp.mel_bins * (dsp.freq_bins() + 2);
    for (kind, bytes) in &layers {
        body.u8(*kind);
        body.u8(0);
        body.u16(0);
        body.len_u32(offset);
        body.len_u32(bytes.len());
        offset += bytes.len();
    }
    body.f32s(model.filterbank.weights());
    body.f32s(&model.qeq.gain);
    body.f32s(&model.qeq.bias);
    for (_, bytes) in &layers {
        body.buf.extend_from_slice(bytes);
    }
    debug_assert_eq!(body.buf.len(), offset);

    let mut out = Writer {
        buf: Vec::with_capacity(PREAMBLE_LEN + body.buf.len() + CRC_LEN),
    };
    out.buf.extend_from_slice(&MAGIC);
    out.u16(VERSION);
    out.u16(0);
    out.len_u32(body.buf.len());
    out.buf.extend_from_slice(&body.buf);
    out.u32(crc32fast::hash(&body.buf));
    Ok(out.buf)
}

/// Parse and validate container bytes.
pub fn from_bytes(bytes: &[u8]) -> Result<SeModel, ContainerError> {
    if bytes.len() < 4 {
        return Err(ContainerError::Truncated {
            needed: PREAMBLE_LEN,
            available: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(ContainerError::BadMagic(magic));
    }
    let mut pre = Reader {
        data: bytes,
        pos: 4,
        base: 0,
    };
    let version = pre.u16()?;
    if version != VERSION {
        return Err(ContainerError::UnsupportedVersion(version));
    }
    if pre.u16()? != 0 {
        return Err(malformed("nonzero reserved field in preamble"));
    }
    let body_len = pre.usize()?;
    let needed = PREAMBLE_LEN + body_len + CRC_LEN;
    if bytes.len() < needed {
        return Err(ContainerError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(malformed(format!("{} trailing bytes after the CRC", bytes.len() - needed)));
    }
    let body = &bytes[PREAMBLE_LEN..PREAMBLE_LEN + body_len];
    let stored = u32::from_le_bytes(bytes[needed - CRC_LEN..].try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(ContainerError::CrcMismatch { stored, computed });
    }
    parse_body(body)
}

fn parse_body(body: &[u8]) -> Result<SeModel, ContainerError> {
    let mut r = Reader {
        data: body,
        pos: 0,
        base: PREAMBLE_LEN,
    };
    let sample_rate = r.u32()?;
    let frame_size = r.usize()?;
    let hop_size = r.usize()?;
    let mel_bins = r.usize()?;
    let freq_bins = r.usize()?;
    let power_exponent = r.f64()?;
    let window = Window::from_code(r.u8()?).ok_or_else(|| malformed("unknown window code"))?;
    let layer_count = r.u8()? as usize;
    if r.u16()? != 0 {
        return Err(malformed("nonzero reserved field in header"));
    }
    if layer_count != LAYER_COUNT {
        return Err(malformed(format!("expected {LAYER_COUNT} layers, found {layer_count}")));
    }
    let dsp = DspConfig {
        sample_rate,
        frame_size,
        hop_size,
        mel_bins,
        power_exponent,
        window,
    };
    dsp.validate().map_err(ContainerError::ShapeChain)?;
    if freq_bins != dsp.freq_bins() {
        return Err(ContainerError::ShapeChain(microse_core::Error::DimensionMismatch {
            expected: dsp.freq_bins(),
            found: freq_bins,
        }));
    }
    let mut table = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let kind = r.u8()?;
        if r.u8()? != 0 || r.u16()? != 0 {
            return Err(malformed("nonzero reserved field in layer table"));
        }
        table.push((kind, r.usize()?, r.usize()?));
    }
    let fb = r.f32s(r.count(mel_bins, freq_bins)?)?;
    let filterbank = MelFilterbank::from_weights(mel_bins, freq_bins, fb)
        .map_err(|e| malformed(format!("invalid filterbank: {e}")))?;
    let gain = r.f32s(mel_bins)?;
    let bias = r.f32s(mel_bins)?;
    let qeq = QeqParams::new(gain, bias).map_err(|e| malformed(format!("invalid QEQ: {e}")))?;

    let expected_kinds = [KIND_LSTM, KIND_LSTM, KIND_DENSE, KIND_DENSE];
    let mut lstm = Vec::new();
    let mut dense = Vec::new();
    for (i, &(kind, offset, len)) in table.iter().enumerate() {
        if kind != expected_kinds[i] {
            return Err(malformed(format!("layer {i} has kind {kind}")));
        }
        if offset != r.pos {
            return Err(malformed(format!("layer {i} offset {offset} does not follow the previous record")));
        }
        let start = r.pos;
        if kind == KIND_LSTM {
            lstm.push(read_lstm(&mut r)?);
        } else {
            dense.push(read_dense(&mut r)?);
        }
        if r.pos - start != len {
            return Err(malformed(format!("layer {i} length {len} does not match its record")));
        }
    }
    if r.pos != body.len() {
        return Err(malformed("unparsed bytes at the end of the body"));
    }
    let [l1, l2]: [LstmLayer; 2] = lstm.try_into().expect("two LSTM records");
    let [d1, d2]: [DenseLayer; 2] = dense.try_into().expect("two dense records");
    if d1.format() != Q8 || d2.format() != Q16 {
        return Err(malformed("dense layers must be 8 then 16 bits"));
    }
    let model = SeModel {
        dsp,
        filterbank,
        qeq,
        lstm: [l1, l2],
        dense: [d1, d2],
    };
    model.validate().map_err(ContainerError::ShapeChain)?;
    Ok(model)
}

pub fn save(model: &SeModel, path: &Path) -> Result<(), ContainerError> {
    let bytes = to_bytes(model)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<SeModel, ContainerError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}
