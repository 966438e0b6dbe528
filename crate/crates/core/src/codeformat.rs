//! Offset quantization and the `FIC1` container.
//!
//! Layout (all multi-byte header fields big-endian):
//!
//! ```text
//! "FIC1" | width u16 | height u16 | max_range u8 | min_range u8 | s_mode u8
//!        | s_max u16 (x10000) | step_factor u16 | s candidate count u8 per level
//! body:  depth-first quadtree walk, top-level blocks row-major, children
//!        TL TR BL BR. Nodes above min_range carry one split bit (1 = split).
//!        Leaves carry domain_x/L, domain_y/L, isometry (3), s code, o code (8).
//!        Bits are packed MSB-first; the last byte is zero-padded.
//! ```

use crate::encoder::{bits_for, levels, FractalCode, SMode, TransformRecord};
use crate::error::{Error, FormatError, Result};
use crate::pixmap::{GrayImage, Isometry};

pub const MAGIC: &[u8; 4] = b"FIC1";

/// Width of one offset cell: 510 / 256.
pub const O_CELL: f64 = 510.0 / 256.0;
pub const O_BITS: u32 = 8;
pub const ISOMETRY_BITS: u32 = 3;

/// Midrise quantizer over `[-255, 255]` with 256 cells. Picks the nearest
/// reconstruction level; exact ties go to the level nearer zero.
pub fn quantize_o(o: f64) -> Result<u8> {
    if !(-255.0..=255.0).contains(&o) {
        return Err(Error::Quantizer(o));
    }
    let t = (o + 255.0) / O_CELL - 0.5;
    let lo = t.floor();
    let code = if t - lo == 0.5 {
        // the level nearer zero; at o = 0 both are equally near, take the upper
        if dequantize_o(lo as u8).abs() < dequantize_o((lo + 1.0).min(255.0) as u8).abs() {
            lo
        } else {
            lo + 1.0
        }
    } else {
        t.round()
    };
    Ok(code.clamp(0.0, 255.0) as u8)
}

pub fn dequantize_o(code: u8) -> f64 {
    -255.0 + (f64::from(code) + 0.5) * O_CELL
}

/// Bit widths of one leaf at a given level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeafLayout {
    pub pos_x_bits: u32,
    pub pos_y_bits: u32,
    pub s_bits: u32,
}

impl LeafLayout {
    pub fn for_level(code: &FractalCode, range_size: usize) -> Self {
        let (gx, gy) = code.domain_grid(range_size);
        LeafLayout {
            pos_x_bits: bits_for(gx),
            pos_y_bits: bits_for(gy),
            s_bits: code.codebook(range_size).bits(),
        }
    }

    pub fn bits(&self) -> u32 {
        self.pos_x_bits + self.pos_y_bits + ISOMETRY_BITS + self.s_bits + O_BITS
    }
}

/// Header length in bytes for a code with `level_count` levels.
pub fn header_len(level_count: usize) -> usize {
    4 + 2 + 2 + 1 + 1 + 1 + 2 + 2 + level_count
}

/// Exact stream length implied by the quadtree shape.
pub fn encoded_len(code: &FractalCode) -> usize {
    let levels = code.levels();
    let mut bits = 0u64;
    for r in &code.records {
        bits += u64::from(LeafLayout::for_level(code, r.range_size).bits());
        if r.range_size > code.min_range {
            bits += 1;
        }
    }
    bits += code.split_count() as u64;
    header_len(levels.len()) + bits.div_ceil(8) as usize
}

struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    filled: u32,
}

impl BitWriter {
    fn new(bytes: Vec<u8>) -> Self {
        Self {
            bytes,
            acc: 0,
            filled: 0,
        }
    }

    fn put(&mut self, value: u32, bits: u32) {
        debug_assert!(bits <= 32 && (bits == 32 || value >> bits == 0));
        if bits == 0 {
            return;
        }
        self.acc = (self.acc << bits) | u64::from(value);
        self.filled += bits;
        while self.filled >= 8 {
            self.filled -= 8;
            self.bytes.push((self.acc >> self.filled) as u8);
        }
        self.acc &= (1u64 << self.filled) - 1;
    }

    fn finish(mut self) -> Vec<u8> {
        if self.filled > 0 {
            self.bytes.push((self.acc << (8 - self.filled)) as u8);
        }
        self.bytes
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    bit: usize,
}

impl<'a> BitReader<'a> {
    fn get(&mut self, bits: u32) -> Result<u32, FormatError> {
        let mut v = 0u32;
        for _ in 0..bits {
            let byte = *self.bytes.get(self.bit / 8).ok_or(FormatError::Truncated)?;
            v = (v << 1) | u32::from((byte >> (7 - self.bit % 8)) & 1);
            self.bit += 1;
        }
        Ok(v)
    }

    /// Remaining bits in the current byte must be zero and no bytes may follow.
    fn finish(self) -> Result<(), FormatError> {
        let used = self.bit.div_ceil(8);
        if !self.bit.is_multiple_of(8) {
            let pad_mask = 0xFFu8 >> (self.bit % 8);
            if self.bytes[self.bit / 8] & pad_mask != 0 {
                return Err(FormatError::Tree("nonzero padding".into()));
            }
        }
        if used != self.bytes.len() {
            return Err(FormatError::Tree(format!(
                "{} trailing bytes",
                self.bytes.len() - used
            )));
        }
        Ok(())
    }
}

pub fn serialize(code: &FractalCode) -> Result<Vec<u8>> {
    check_header(code).map_err(Error::Format)?;
    let levels = code.levels();
    let mut head = Vec::with_capacity(header_len(levels.len()));
    head.extend_from_slice(MAGIC);
    head.extend_from_slice(&(code.width as u16).to_be_bytes());
    head.extend_from_slice(&(code.height as u16).to_be_bytes());
    head.push(code.max_range as u8);
    head.push(code.min_range as u8);
    head.push(code.s_mode.code());
    head.extend_from_slice(&s_max_fixed(code.s_max).to_be_bytes());
    head.extend_from_slice(&(code.step_factor as u16).to_be_bytes());
    for &b in &levels {
        head.push(code.codebook(b).len() as u8);
    }

    let mut w = BitWriter::new(head);
    let mut next = 0usize;
    for y in (0..code.height).step_by(code.max_range) {
        for x in (0..code.width).step_by(code.max_range) {
            write_node(code, &mut w, &mut next, x, y, code.max_range)?;
        }
    }
    if next != code.records.len() {
        return Err(FormatError::Tree(format!(
            "{} records outside the quadtree walk",
            code.records.len() - next
        ))
        .into());
    }
    Ok(w.finish())
}

fn write_node(
    code: &FractalCode,
    w: &mut BitWriter,
    next: &mut usize,
    x: usize,
    y: usize,
    size: usize,
) -> Result<(), FormatError> {
    let leaf = code
        .records
        .get(*next)
        .filter(|r| r.range_x == x && r.range_y == y && r.range_size == size);
    match leaf {
        Some(r) => {
            if size > code.min_range {
                w.put(0, 1);
            }
            write_leaf(code, w, r)?;
            *next += 1;
        }
        None if size > code.min_range => {
            w.put(1, 1);
            let h = size / 2;
            for (cx, cy) in [(x, y), (x + h, y), (x, y + h), (x + h, y + h)] {
                write_node(code, w, next, cx, cy, h)?;
            }
        }
        None => {
            return Err(FormatError::Tree(format!(
                "no record covers ({x},{y}) at minimum size {size}"
            )))
        }
    }
    Ok(())
}

fn write_leaf(
    code: &FractalCode,
    w: &mut BitWriter,
    r: &TransformRecord,
) -> Result<(), FormatError> {
    let b = r.range_size;
    let step = code.step(b);
    let (gx, gy) = code.domain_grid(b);
    let layout = LeafLayout::for_level(code, b);
    let bad = |what: String| {
        FormatError::Tree(format!("record at ({},{}): {what}", r.range_x, r.range_y))
    };
    if !r.domain_x.is_multiple_of(step) || !r.domain_y.is_multiple_of(step) {
        return Err(bad(format!(
            "domain ({},{}) off the step-{step} grid",
            r.domain_x, r.domain_y
        )));
    }
    let (dx, dy) = (r.domain_x / step, r.domain_y / step);
    if dx >= gx || dy >= gy {
        return Err(bad(format!(
            "domain ({},{}) outside the image",
            r.domain_x, r.domain_y
        )));
    }
    if r.s_index as usize >= code.codebook(b).len() {
        return Err(bad(format!("s code {} out of range", r.s_index)));
    }
    w.put(dx as u32, layout.pos_x_bits);
    w.put(dy as u32, layout.pos_y_bits);
    w.put(u32::from(r.isometry.index()), ISOMETRY_BITS);
    w.put(u32::from(r.s_index), layout.s_bits);
    w.put(u32::from(r.o_code), O_BITS);
    Ok(())
}

fn s_max_fixed(s_max: f64) -> u16 {
    (s_max * 10_000.0).round() as u16
}

fn check_header(code: &FractalCode) -> Result<(), FormatError> {
    let err = |m: &str| Err(FormatError::Header(m.into()));
    if code.width == 0 || code.height == 0 || code.width > 65535 || code.height > 65535 {
        return err("image dimensions must be in 1..=65535");
    }
    if !code.max_range.is_power_of_two() || !code.min_range.is_power_of_two() {
        return err("range sizes must be powers of two");
    }
    if code.min_range < 2 || code.max_range > 32 || code.min_range > code.max_range {
        return err("need 2 <= min_range <= max_range <= 32");
    }
    if !code.width.is_multiple_of(code.max_range) || !code.height.is_multiple_of(code.max_range) {
        return err("dimensions not divisible by max_range");
    }
    if !(code.s_max > 0.0 && code.s_max <= 1.0) {
        return err("s_max outside (0, 1]");
    }
    if code.step_factor == 0 || code.step_factor > 65535 {
        return err("step factor must be in 1..=65535");
    }
    Ok(())
}

pub fn deserialize(bytes: &[u8]) -> Result<FractalCode> {
    Ok(read_code(bytes)?)
}

fn read_code(bytes: &[u8]) -> Result<FractalCode, FormatError> {
    if bytes.len() < 4 {
        return Err(FormatError::Truncated);
    }
    if &bytes[..4] != MAGIC {
        return Err(FormatError::Magic);
    }
    let fixed = header_len(0);
    if bytes.len() < fixed {
        return Err(FormatError::Truncated);
    }
    let u16_at = |i: usize| u16::from_be_bytes([bytes[i], bytes[i + 1]]);
    let s_mode = SMode::from_code(bytes[10])
        .ok_or_else(|| FormatError::Header(format!("unknown s-mode {}", bytes[10])))?;
    let mut code = FractalCode {
        width: u16_at(4) as usize,
        height: u16_at(6) as usize,
        max_range: bytes[8] as usize,
        min_range: bytes[9] as usize,
        s_mode,
        s_max: f64::from(u16_at(11)) / 10_000.0,
        step_factor: u16_at(13) as usize,
        records: Vec::new(),
    };
    check_header(&code)?;
    let lv = levels(code.max_range, code.min_range);
    let head = header_len(lv.len());
    if bytes.len() < head {
        return Err(FormatError::Truncated);
    }
    for (i, &b) in lv.iter().enumerate() {
        let stored = bytes[fixed + i] as usize;
        let expected = code.codebook(b).len();
        if stored != expected {
            return Err(FormatError::Header(format!(
                "level {b}: {stored} s candidates, mode {s_mode} implies {expected}"
            )));
        }
    }

    let mut reader = BitReader {
        bytes: &bytes[head..],
        bit: 0,
    };
    let mut records = Vec::new();
    for y in (0..code.height).step_by(code.max_range) {
        for x in (0..code.width).step_by(code.max_range) {
            read_node(&code, &mut reader, &mut records, x, y, code.max_range)?;
        }
    }
    reader.finish()?;
    code.records = records;
    Ok(code)
}

fn read_node(
    code: &FractalCode,
    r: &mut BitReader<'_>,
    out: &mut Vec<TransformRecord>,
    x: usize,
    y: usize,
    size: usize,
) -> Result<(), FormatError> {
    let split = size > code.min_range && r.get(1)? == 1;
    if split {
        let h = size / 2;
        for (cx, cy) in [(x, y), (x + h, y), (x, y + h), (x + h, y + h)] {
            read_node(code, r, out, cx, cy, h)?;
        }
        return Ok(());
    }
    let (gx, gy) = code.domain_grid(size);
    if gx == 0 {
        return Err(FormatError::Tree(format!(
            "leaf of size {size} but no {}-pixel domain fits",
            2 * size
        )));
    }
    let layout = LeafLayout::for_level(code, size);
    let dx = r.get(layout.pos_x_bits)? as usize;
    let dy = r.get(layout.pos_y_bits)? as usize;
    let iso = r.get(ISOMETRY_BITS)? as u8;
    let s_index = r.get(layout.s_bits)? as u8;
    let o_code = r.get(O_BITS)? as u8;
    if dx >= gx || dy >= gy {
        return Err(FormatError::Tree(format!(
            "domain code ({dx},{dy}) beyond grid {gx}x{gy}"
        )));
    }
    if s_index as usize >= code.codebook(size).len() {
        return Err(FormatError::Tree(format!("s code {s_index} out of range")));
    }
    let step = code.step(size);
    out.push(TransformRecord {
        range_x: x,
        range_y: y,
        range_size: size,
        domain_x: dx * step,
        domain_y: dy * step,
        isometry: Isometry::new(iso).expect("3-bit field"),
        s_index,
        o_code,
    });
    Ok(())
}

/// Raw image bytes (one per pixel) over stream bytes.
pub fn compression_ratio(image: &GrayImage, stream: &[u8]) -> f64 {
    ratio(image.width() * image.height(), stream.len())
}

pub fn ratio(pixels: usize, stream_len: usize) -> f64 {
    pixels as f64 / stream_len as f64
}
