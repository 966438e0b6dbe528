//! Grayscale rasters, binary PGM I/O and the block primitives shared by the
//! encoder and decoder: window extraction, 2x2 decimation and the eight
//! square isometries.

use std::fmt;

use crate::error::{Error, PgmError, Result};

/// 8-bit grayscale raster, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "zero dimension {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} bytes for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image from `f(x, y)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Row `y`, columns `x..x + len`.
    #[inline]
    pub(crate) fn row_slice(&self, x: usize, y: usize, len: usize) -> &[u8] {
        let start = y * self.width + x;
        &self.data[start..start + len]
    }
}

/// Parses a binary PGM ("P5", maxval 255). `#` comments are allowed anywhere
/// whitespace is allowed in the header.
pub fn load_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(PgmError::Magic);
    }
    let mut pos = 2;
    let width = next_header_int(bytes, &mut pos, "width")?;
    let height = next_header_int(bytes, &mut pos, "height")?;
    let maxval = next_header_int(bytes, &mut pos, "maxval")?;
    if width == 0 {
        return Err(PgmError::ZeroDimension("width"));
    }
    if height == 0 {
        return Err(PgmError::ZeroDimension("height"));
    }
    if maxval != 255 {
        return Err(PgmError::Maxval(maxval));
    }
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(PgmError::Header("maxval")),
    }
    let expected = width as usize * height as usize;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(PgmError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    Ok(GrayImage {
        width: width as usize,
        height: height as usize,
        data: payload[..expected].to_vec(),
    })
}

fn next_header_int(bytes: &[u8], pos: &mut usize, field: &'static str) -> Result<u32, PgmError> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' || b == b'\r' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(PgmError::Header(field)),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(PgmError::Header(field));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or(PgmError::Header(field))
}

/// Serializes as `P5\n<w> <h>\n255\n` followed by the raster.
pub fn save_pgm(image: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", image.width, image.height);
    let mut out = Vec::with_capacity(header.len() + image.data.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&image.data);
    out
}

/// Square block of real-valued samples, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    size: usize,
    values: Vec<f64>,
}

impl Block {
    pub fn new(size: usize, values: Vec<f64>) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidBlock("zero size".into()));
        }
        if values.len() != size * size {
            return Err(Error::InvalidBlock(format!(
                "{} values for size {size}",
                values.len()
            )));
        }
        Ok(Self { size, values })
    }

    /// Builds a block from `f(row, col)`.
    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                values.push(f(i, j));
            }
        }
        Self { size, values }
    }

    pub fn constant(size: usize, value: f64) -> Self {
        Self {
            size,
            values: vec![value; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of samples, `size²`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.size + col]
    }
}

/// Copies the `size`×`size` window whose top-left corner is `(x, y)`.
pub fn extract_block(image: &GrayImage, x: usize, y: usize, size: usize) -> Result<Block> {
    if size == 0 || x + size > image.width || y + size > image.height {
        return Err(Error::OutOfBounds {
            x,
            y,
            size,
            width: image.width,
            height: image.height,
        });
    }
    let mut values = Vec::with_capacity(size * size);
    for row in y..y + size {
        values.extend(image.row_slice(x, row, size).iter().map(|&p| f64::from(p)));
    }
    Ok(Block { size, values })
}

/// Halves a block by exact 2x2 averaging. No rounding: averages of integers
/// land on quarter-integers.
pub fn decimate(block: &Block) -> Result<Block> {
    let n = block.size;
    if !n.is_multiple_of(2) {
        return Err(Error::InvalidBlock(format!("cannot decimate odd size {n}")));
    }
    let half = n / 2;
    let v = &block.values;
    let out = Block::from_fn(half, |i, j| {
        let (r, c) = (2 * i, 2 * j);
        (v[r * n + c] + v[r * n + c + 1] + v[(r + 1) * n + c] + v[(r + 1) * n + c + 1]) / 4.0
    });
    Ok(out)
}

/// Decimated `2·size`-window read straight from an image.
pub(crate) fn decimated_window(image: &GrayImage, x: usize, y: usize, out_size: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(out_size * out_size);
    for i in 0..out_size {
        let top = image.row_slice(x, y + 2 * i, 2 * out_size);
        let bottom = image.row_slice(x, y + 2 * i + 1, 2 * out_size);
        for j in 0..out_size {
            let sum = u32::from(top[2 * j])
                + u32::from(top[2 * j + 1])
                + u32::from(bottom[2 * j])
                + u32::from(bottom[2 * j + 1]);
            out.push(f64::from(sum) / 4.0);
        }
    }
    out
}

/// One of the eight symmetries of the square.
///
/// Indices 0..=3 are clockwise rotations by `90·k` degrees; 4..=7 are the
/// rotation `k - 4` followed by a horizontal mirror. The index is stored in
/// the bitstream, so this numbering is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Isometry(u8);

impl Isometry {
    pub const IDENTITY: Isometry = Isometry(0);

    pub const ALL: [Isometry; 8] = [
        Isometry(0),
        Isometry(1),
        Isometry(2),
        Isometry(3),
        Isometry(4),
        Isometry(5),
        Isometry(6),
        Isometry(7),
    ];

    pub fn new(index: u8) -> Result<Self> {
        if index < 8 {
            Ok(Isometry(index))
        } else {
            Err(Error::Isometry(index))
        }
    }

    pub fn index(self) -> u8 {
        self.0
    }

    /// Source coordinates read by output `(row, col)` of an `n`×`n` block.
    #[inline]
    pub fn source(self, n: usize, row: usize, col: usize) -> (usize, usize) {
        let col = if self.0 >= 4 { n - 1 - col } else { col };
        match self.0 & 3 {
            0 => (row, col),
            1 => (n - 1 - col, row),
            2 => (n - 1 - row, n - 1 - col),
            _ => (col, n - 1 - row),
        }
    }

    /// Applies the isometry to a row-major `n`×`n` slice.
    pub fn transform(self, n: usize, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), n * n);
        if self.0 == 0 {
            return values.to_vec();
        }
        let mut out = Vec::with_capacity(n * n);
        for row in 0..n {
            for col in 0..n {
                let (r, c) = self.source(n, row, col);
                out.push(values[r * n + c]);
            }
        }
        out
    }

    pub fn apply(self, block: &Block) -> Block {
        Block {
            size: block.size,
            values: self.transform(block.size, &block.values),
        }
    }
}

pub fn apply_isometry(block: &Block, k: u8) -> Result<Block> {
    Ok(Isometry::new(k)?.apply(block))
}

pub fn block_mean(block: &Block) -> f64 {
    mean(&block.values)
}

#[inline]
pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_by_two() -> GrayImage {
        GrayImage::new(2, 2, vec![0, 1, 2, 3]).unwrap()
    }

    #[test]
    fn minimal_pgm_parses() {
        let mut bytes = b"P5 2 2 255\n".to_vec();
        bytes.extend([0, 1, 2, 3]);
        assert_eq!(load_pgm(&bytes).unwrap(), two_by_two());
    }

    #[test]
    fn pgm_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 # width done\n2\n255\n".to_vec();
        bytes.extend([0, 1, 2, 3]);
        assert_eq!(load_pgm(&bytes).unwrap(), two_by_two());
    }

    #[test]
    fn pgm_errors_name_the_field() {
        let mut wide = b"P5 2 2 65535\n".to_vec();
        wide.extend([0; 8]);
        assert_eq!(load_pgm(&wide), Err(PgmError::Maxval(65535)));
        assert_eq!(load_pgm(b"P2 2 2 255\n\0\0\0\0"), Err(PgmError::Magic));
        assert_eq!(
            load_pgm(b"P5 0 2 255\n"),
            Err(PgmError::ZeroDimension("width"))
        );
        assert_eq!(
            load_pgm(b"P5 2 0 255\n"),
            Err(PgmError::ZeroDimension("height"))
        );
        assert_eq!(load_pgm(b"P5 2 x 255\n"), Err(PgmError::Header("height")));
        assert_eq!(
            load_pgm(b"P5 2 2 255\n\x01\x02"),
            Err(PgmError::Truncated {
                expected: 4,
                found: 2
            })
        );
    }

    #[test]
    fn save_pgm_header_is_fixed() {
        let img = GrayImage::new(1, 1, vec![128]).unwrap();
        assert_eq!(save_pgm(&img), b"P5\n1 1\n255\n\x80".to_vec());
        let bytes = save_pgm(&two_by_two());
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 1, 2, 3]);
    }

    #[test]
    fn extract_windows() {
        let img = two_by_two();
        let full = extract_block(&img, 0, 0, 2).unwrap();
        assert_eq!(full.values(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(extract_block(&img, 1, 0, 1).unwrap().values(), &[1.0]);
        let four = GrayImage::filled(4, 4, 0).unwrap();
        assert!(matches!(
            extract_block(&four, 3, 0, 2),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn decimation_is_exact() {
        let b = Block::new(2, vec![0.0, 2.0, 4.0, 6.0]).unwrap();
        assert_eq!(decimate(&b).unwrap().values(), &[3.0]);
        let q = Block::new(2, vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(decimate(&q).unwrap().values(), &[0.25]);
        let c = Block::constant(8, 7.0);
        assert_eq!(decimate(&c).unwrap(), Block::constant(4, 7.0));
        assert!(decimate(&Block::constant(3, 1.0)).is_err());
    }

    #[test]
    fn decimated_window_matches_block_path() {
        let img = GrayImage::from_fn(8, 8, |x, y| (x * 31 + y * 17) as u8).unwrap();
        let via_block = decimate(&extract_block(&img, 2, 4, 4).unwrap()).unwrap();
        assert_eq!(decimated_window(&img, 2, 4, 2), via_block.values());
    }

    #[test]
    fn quarter_turn_example() {
        let b = Block::new(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(
            apply_isometry(&b, 1).unwrap().values(),
            &[3.0, 1.0, 4.0, 2.0]
        );
        assert_eq!(apply_isometry(&b, 0).unwrap(), b);
        assert!(matches!(apply_isometry(&b, 8), Err(Error::Isometry(8))));
    }

    #[test]
    fn means() {
        assert_eq!(block_mean(&Block::constant(4, 9.0)), 9.0);
        let b = Block::new(2, vec![0.0, 255.0, 255.0, 0.0]).unwrap();
        assert_eq!(block_mean(&b), 127.5);
        assert_eq!(block_mean(&Block::new(1, vec![1.0]).unwrap()), 1.0);
    }

    fn int_block(size: usize) -> impl Strategy<Value = Block> {
        prop::collection::vec(0u8..=255, size * size)
            .prop_map(move |v| Block::new(size, v.into_iter().map(f64::from).collect()).unwrap())
    }

    proptest! {
        #[test]
        fn pgm_round_trip(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
            let img = GrayImage::from_fn(w, h, |x, y| {
                (seed.wrapping_mul(x as u64 + 1).wrapping_add(y as u64 * 7919) >> 3) as u8
            }).unwrap();
            let bytes = save_pgm(&img);
            prop_assert_eq!(load_pgm(&bytes).unwrap(), img);
            prop_assert_eq!(save_pgm(&load_pgm(&bytes).unwrap()), bytes);
        }

        #[test]
        fn rotation_has_order_four(b in int_block(4)) {
            let r = Isometry(1);
            let back = r.apply(&r.apply(&r.apply(&r.apply(&b))));
            prop_assert_eq!(back, b);
        }

        #[test]
        fn decimation_commutes_with_isometries(b in int_block(8), k in 0u8..8) {
            let iso = Isometry(k);
            prop_assert_eq!(
                decimate(&iso.apply(&b)).unwrap(),
                iso.apply(&decimate(&b).unwrap())
            );
        }

        #[test]
        fn mean_is_invariant(b in int_block(4), k in 0u8..8) {
            prop_assert_eq!(block_mean(&Isometry(k).apply(&b)), block_mean(&b));
            prop_assert_eq!(block_mean(&decimate(&b).unwrap()), block_mean(&b));
        }
    }
}
