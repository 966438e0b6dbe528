//! Quadtree fractal encoder.
//!
//! Each level `B` (from `max_range` down to `min_range`) builds an
//! entropy-pruned pool of `2B`×`2B` domains, matches every pending `B`×`B`
//! range against it, keeps matches whose RMS collage error is within
//! tolerance and splits the rest into four children. Ranges at
//! `min_range` are always kept.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::codeformat::{dequantize_o, quantize_o};
use crate::entropy_pool::{DomainPool, PoolSelection};
use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::pixmap::{extract_block, mean, Block, GrayImage, Isometry};

/// How the contrast factor `s` is chosen for each range/domain pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SMode {
    /// Per-level fixed candidate sets; `o` follows from the chosen `s`.
    #[default]
    Predefined,
    /// Ten uniform samples of (0, 1), every one tried.
    Sampled10,
    /// Least-squares `s`, quantized to 5 bits over `[0, s_max]`.
    LeastSquares,
}

impl SMode {
    pub fn code(self) -> u8 {
        match self {
            SMode::Predefined => 0,
            SMode::Sampled10 => 1,
            SMode::LeastSquares => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SMode::Predefined),
            1 => Some(SMode::Sampled10),
            2 => Some(SMode::LeastSquares),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SMode::Predefined => "predefined",
            SMode::Sampled10 => "sampled10",
            SMode::LeastSquares => "ls",
        }
    }
}

impl fmt::Display for SMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "predefined" => Ok(SMode::Predefined),
            "sampled10" => Ok(SMode::Sampled10),
            "ls" | "least_squares" | "least-squares" => Ok(SMode::LeastSquares),
            other => Err(format!("unknown s-mode {other:?}")),
        }
    }
}

/// Levels of the least-squares `s` quantizer (5 bits, both ends included).
pub const LS_S_LEVELS: usize = 32;

/// The ten-sample baseline set {0.05, 0.15, ..., 0.95}.
pub const SAMPLED10: [f64; 10] = [0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95];

/// Per-level predefined candidates, keyed by range size.
pub struct SSchedule;

impl SSchedule {
    pub fn predefined(range_size: usize) -> &'static [f64] {
        match range_size {
            8 => &[0.2, 0.4],
            4 => &[0.3, 0.8],
            2 => &[0.5, 0.9],
            // 16 and the optional 32 level
            _ => &[0.1],
        }
    }
}

/// The `s` values a level may code, indexed by the stored `s` code.
#[derive(Debug, Clone, PartialEq)]
pub struct SCodebook {
    pub mode: SMode,
    pub s_max: f64,
    pub values: Vec<f64>,
}

impl SCodebook {
    pub fn for_level(mode: SMode, range_size: usize, s_max: f64) -> Self {
        let values = match mode {
            SMode::Predefined => SSchedule::predefined(range_size)
                .iter()
                .map(|&s| s.min(s_max))
                .collect(),
            SMode::Sampled10 => SAMPLED10.iter().map(|&s| s.min(s_max)).collect(),
            SMode::LeastSquares => (0..LS_S_LEVELS)
                .map(|c| c as f64 * s_max / (LS_S_LEVELS - 1) as f64)
                .collect(),
        };
        SCodebook {
            mode,
            s_max,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Bits needed for one `s` code.
    pub fn bits(&self) -> u32 {
        bits_for(self.values.len())
    }

    /// Nearest code on the least-squares grid.
    fn quantize_ls(&self, s: f64) -> u8 {
        let steps = (LS_S_LEVELS - 1) as f64;
        ((s / self.s_max) * steps).round().clamp(0.0, steps) as u8
    }
}

/// `ceil(log2(count))`, zero for a single choice.
pub fn bits_for(count: usize) -> u32 {
    if count <= 1 {
        0
    } else {
        usize::BITS - (count - 1).leading_zeros()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub max_range: usize,
    pub min_range: usize,
    /// Accept a match when `sqrt(error / B²)` is at most this many gray levels.
    pub rms_tolerance: f64,
    pub pool_selection: PoolSelection,
    /// Domain step `L = factor · B`.
    pub domain_step_factor: usize,
    pub s_mode: SMode,
    pub s_max: f64,
    pub decode_iterations: usize,
    pub execution: Execution,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            max_range: 16,
            min_range: 2,
            rms_tolerance: 14.0,
            pool_selection: PoolSelection::TopK(256),
            domain_step_factor: 1,
            s_mode: SMode::Predefined,
            s_max: 1.0,
            decode_iterations: 12,
            execution: Execution::default(),
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let pow2 = |v: usize| v.is_power_of_two();
        if !pow2(self.max_range) || !pow2(self.min_range) {
            return Err(Error::Config("range sizes must be powers of two".into()));
        }
        if self.min_range < 2 || self.max_range > 32 || self.min_range > self.max_range {
            return Err(Error::Config(format!(
                "need 2 <= min_range <= max_range <= 32, got {}..{}",
                self.min_range, self.max_range
            )));
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
        if !(self.rms_tolerance > 0.0) {
            return Err(Error::Config("rms_tolerance must be positive".into()));
        }
        if !(self.s_max > 0.0 && self.s_max <= 1.0) {
            return Err(Error::Config("s_max must lie in (0, 1]".into()));
        }
        if self.domain_step_factor == 0 || self.domain_step_factor > u16::MAX as usize {
            return Err(Error::Config(
                "domain_step_factor must be in 1..=65535".into(),
            ));
        }
        if self.decode_iterations == 0 {
            return Err(Error::Config("decode_iterations must be at least 1".into()));
        }
        match self.pool_selection {
            PoolSelection::TopK(0) => Err(Error::Config("pool size must be at least 1".into())),
            PoolSelection::MinEntropy(t) if !t.is_finite() => {
                Err(Error::Config("entropy threshold must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    /// `s_max` as carried by the bitstream (four decimal places).
    pub fn coded_s_max(&self) -> f64 {
        (self.s_max * 10_000.0).round() / 10_000.0
    }
}

/// One quadtree leaf: range placement, source domain and quantized map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TransformRecord {
    pub range_x: usize,
    pub range_y: usize,
    pub range_size: usize,
    /// Top-left of the `2B`×`2B` source block.
    pub domain_x: usize,
    pub domain_y: usize,
    pub isometry: Isometry,
    pub s_index: u8,
    pub o_code: u8,
}

/// The complete code of an image. Records are stored in depth-first quadtree
/// order (top-level blocks row-major, children TL, TR, BL, BR).
#[derive(Debug, Clone, PartialEq)]
pub struct FractalCode {
    pub width: usize,
    pub height: usize,
    pub max_range: usize,
    pub min_range: usize,
    pub s_mode: SMode,
    pub s_max: f64,
    pub step_factor: usize,
    pub records: Vec<TransformRecord>,
}

impl FractalCode {
    /// Range sizes from `max_range` down to `min_range`.
    pub fn levels(&self) -> Vec<usize> {
        levels(self.max_range, self.min_range)
    }

    pub fn codebook(&self, range_size: usize) -> SCodebook {
        SCodebook::for_level(self.s_mode, range_size, self.s_max)
    }

    pub fn step(&self, range_size: usize) -> usize {
        self.step_factor * range_size
    }

    /// Domain origins per axis at a level; zero when `2B` does not fit.
    pub fn domain_grid(&self, range_size: usize) -> (usize, usize) {
        domain_grid(
            self.width,
            self.height,
            2 * range_size,
            self.step(range_size),
        )
    }

    pub fn s_value(&self, record: &TransformRecord) -> f64 {
        self.codebook(record.range_size).values[record.s_index as usize]
    }

    pub fn o_value(&self, record: &TransformRecord) -> f64 {
        dequantize_o(record.o_code)
    }

    /// Leaf count per level, aligned with `levels()`.
    pub fn leaves_per_level(&self) -> Vec<(usize, usize)> {
        self.levels()
            .into_iter()
            .map(|b| (b, self.records.iter().filter(|r| r.range_size == b).count()))
            .collect()
    }

    /// Number of split (internal) quadtree nodes.
    pub fn split_count(&self) -> usize {
        let top = (self.width / self.max_range) * (self.height / self.max_range);
        (self.records.len().saturating_sub(top)) / 3
    }
}

pub(crate) fn levels(max_range: usize, min_range: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut b = max_range;
    while b >= min_range && b > 0 {
        out.push(b);
        b /= 2;
    }
    out
}

pub(crate) fn domain_grid(
    width: usize,
    height: usize,
    domain: usize,
    step: usize,
) -> (usize, usize) {
    if domain > width || domain > height || step == 0 {
        (0, 0)
    } else {
        ((width - domain) / step + 1, (height - domain) / step + 1)
    }
}

/// Least-squares contrast and offset for mapping `domain` onto `range`,
/// with `s` clamped to `[0, s_max]` and `o` to `[-255, 255]`. Returns
/// `(s, o, error)` where `error = Σ (s·d + o − r)²`.
pub fn optimal_so(range: &Block, domain: &Block, s_max: f64) -> Result<(f64, f64, f64)> {
    check_sizes(range, domain)?;
    let r = range.values();
    let d = domain.values();
    let r_mean = mean(r);
    let d_mean = mean(d);
    let norm: f64 = d.iter().map(|v| (v - d_mean) * (v - d_mean)).sum();
    let s = if norm == 0.0 {
        0.0
    } else {
        let cross: f64 = r
            .iter()
            .zip(d)
            .map(|(a, b)| (a - r_mean) * (b - d_mean))
            .sum();
        (cross / norm).clamp(0.0, s_max)
    };
    let o = (r_mean - s * d_mean).clamp(-255.0, 255.0);
    Ok((s, o, collage_error(r, d, s, o)))
}

/// Offset and error for a given contrast `s`: `o = R̄ − s·D̄`, clamped.
pub fn fixed_s_match(range: &Block, domain: &Block, s: f64) -> Result<(f64, f64)> {
    check_sizes(range, domain)?;
    let o = (mean(range.values()) - s * mean(domain.values())).clamp(-255.0, 255.0);
    Ok((o, collage_error(range.values(), domain.values(), s, o)))
}

fn check_sizes(range: &Block, domain: &Block) -> Result<()> {
    if range.size() != domain.size() {
        return Err(Error::SizeMismatch(range.size(), domain.size()));
    }
    Ok(())
}

#[inline]
fn collage_error(r: &[f64], d: &[f64], s: f64, o: f64) -> f64 {
    r.iter()
        .zip(d)
        .map(|(&ri, &di)| {
            let e = s * di + o - ri;
            e * e
        })
        .sum()
}

/// Best quantized map for one range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeMatch {
    /// Index into `pool.entries`.
    pub entry: usize,
    pub domain_x: usize,
    pub domain_y: usize,
    pub isometry: Isometry,
    pub s_index: u8,
    pub o_code: u8,
    /// Collage error with the quantized `(s, o)`.
    pub error: f64,
    /// Contrast before quantization: the candidate value, or the clamped
    /// least-squares optimum.
    pub s: f64,
}

/// Scans the whole pool for the quantized map with the smallest collage
/// error. Ties go to the earlier pool entry, then the smaller `s` code.
pub fn match_range(range: &Block, pool: &DomainPool, codebook: &SCodebook) -> Result<RangeMatch> {
    if pool.is_empty() {
        return Err(Error::Pool("empty pool".into()));
    }
    if pool.block_size() != range.size() {
        return Err(Error::SizeMismatch(range.size(), pool.block_size()));
    }
    let r = range.values();
    let r_mean = mean(r);
    let centered: Vec<f64> = r.iter().map(|v| v - r_mean).collect();
    let mut best: Option<RangeMatch> = None;

    let mut consider = |entry: usize, s_index: u8, s_q: f64, s_raw: f64| -> bool {
        let e = &pool.entries[entry];
        let o_code = quantize_o((r_mean - s_q * e.mean).clamp(-255.0, 255.0))
            .expect("offset clamped into quantizer range");
        let error = collage_error(r, e.decimated.values(), s_q, dequantize_o(o_code));
        if best.is_none_or(|b| error < b.error) {
            best = Some(RangeMatch {
                entry,
                domain_x: e.origin_x,
                domain_y: e.origin_y,
                isometry: e.isometry,
                s_index,
                o_code,
                error,
                s: s_raw,
            });
        }
        error == 0.0
    };

    'scan: for (i, e) in pool.entries.iter().enumerate() {
        match codebook.mode {
            SMode::LeastSquares => {
                let s = if e.centered_norm_sq == 0.0 {
                    0.0
                } else {
                    let cross: f64 = centered
                        .iter()
                        .zip(e.decimated.values())
                        .map(|(a, b)| a * b)
                        .sum();
                    (cross / e.centered_norm_sq).clamp(0.0, codebook.s_max)
                };
                let code = codebook.quantize_ls(s);
                if consider(i, code, codebook.values[code as usize], s) {
                    break 'scan;
                }
            }
            SMode::Predefined | SMode::Sampled10 => {
                for (k, &s) in codebook.values.iter().enumerate() {
                    if consider(i, k as u8, s, s) {
                        break 'scan;
                    }
                }
            }
        }
    }
    Ok(best.expect("pool is nonempty"))
}

/// Per-level encoder counters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LevelStats {
    pub range_size: usize,
    /// Ranges matched at this level.
    pub ranges: usize,
    pub accepted: usize,
    pub split: usize,
    pub pool_origins: usize,
    pub pool_entries: usize,
    /// Contrast of every accepted match (see `RangeMatch::s`).
    pub accepted_s: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct EncodeStats {
    pub levels: Vec<LevelStats>,
    /// Wall-clock encode time, pool construction included.
    pub seconds: f64,
    /// Collage error of each record, aligned with `FractalCode::records`.
    pub record_errors: Vec<f64>,
}

impl EncodeStats {
    pub fn total_collage_error(&self) -> f64 {
        self.record_errors.iter().sum()
    }

    pub fn level(&self, range_size: usize) -> Option<&LevelStats> {
        self.levels.iter().find(|l| l.range_size == range_size)
    }

    pub fn leaves(&self, range_size: usize) -> usize {
        self.level(range_size).map_or(0, |l| l.accepted)
    }
}

pub fn encode(image: &GrayImage, config: &EncoderConfig) -> Result<(FractalCode, EncodeStats)> {
    config.validate()?;
    let (width, height) = (image.width(), image.height());
    if width % config.max_range != 0 || height % config.max_range != 0 {
        return Err(Error::Indivisible {
            width,
            height,
            range: config.max_range,
        });
    }
    if width > u16::MAX as usize || height > u16::MAX as usize {
        return Err(Error::InvalidImage(format!(
            "{width}x{height} exceeds 65535"
        )));
    }
    let start = Instant::now();
    let exec = config.execution;
    let s_max = config.coded_s_max();

    let mut pending: Vec<(usize, usize)> = Vec::new();
    for y in (0..height).step_by(config.max_range) {
        for x in (0..width).step_by(config.max_range) {
            pending.push((x, y));
        }
    }
    let mut leaves: Vec<(TransformRecord, f64)> = Vec::new();
    let mut level_stats = Vec::new();

    for b in levels(config.max_range, config.min_range) {
        let last = b == config.min_range;
        let mut stats = LevelStats {
            range_size: b,
            ranges: pending.len(),
            ..Default::default()
        };
        if pending.is_empty() {
            level_stats.push(stats);
            continue;
        }
        let (gx, _) = domain_grid(width, height, 2 * b, config.domain_step_factor * b);
        if gx == 0 {
            // no 2B domain fits the image: everything at this level splits
            if last {
                return Err(Error::Pool(format!(
                    "domain size {} exceeds {width}x{height} image",
                    2 * b
                )));
            }
            stats.split = pending.len();
            pending = split_all(&pending, b);
            level_stats.push(stats);
            continue;
        }
        let pool = DomainPool::build(
            image,
            2 * b,
            config.domain_step_factor * b,
            config.pool_selection,
            exec,
        )?;
        stats.pool_origins = pool.retained_origins;
        stats.pool_entries = pool.len();
        let codebook = SCodebook::for_level(config.s_mode, b, s_max);

        let matches = exec.map(&pending, |&(x, y)| {
            let range = extract_block(image, x, y, b)?;
            match_range(&range, &pool, &codebook)
        });

        let mut next = Vec::new();
        let area = (b * b) as f64;
        for (&(x, y), m) in pending.iter().zip(matches) {
            let m = m?;
            if last || (m.error / area).sqrt() <= config.rms_tolerance {
                stats.accepted += 1;
                stats.accepted_s.push(m.s);
                leaves.push((
                    TransformRecord {
                        range_x: x,
                        range_y: y,
                        range_size: b,
                        domain_x: m.domain_x,
                        domain_y: m.domain_y,
                        isometry: m.isometry,
                        s_index: m.s_index,
                        o_code: m.o_code,
                    },
                    m.error,
                ));
            } else {
                stats.split += 1;
                next.extend(children(x, y, b));
            }
        }
        log::debug!(
            "level {b}: {} ranges, {} accepted, {} split, pool {} origins",
            stats.ranges,
            stats.accepted,
            stats.split,
            stats.pool_origins
        );
        level_stats.push(stats);
        pending = next;
    }

    let max_range = config.max_range;
    let min_range = config.min_range;
    let top_cols = width / max_range;
    leaves.sort_by_key(|(r, _)| tree_order_key(r, max_range, min_range, top_cols));
    let (records, record_errors) = leaves.into_iter().unzip();

    let code = FractalCode {
        width,
        height,
        max_range,
        min_range,
        s_mode: config.s_mode,
        s_max,
        step_factor: config.domain_step_factor,
        records,
    };
    let stats = EncodeStats {
        levels: level_stats,
        seconds: start.elapsed().as_secs_f64(),
        record_errors,
    };
    Ok((code, stats))
}

fn children(x: usize, y: usize, b: usize) -> [(usize, usize); 4] {
    let h = b / 2;
    [(x, y), (x + h, y), (x, y + h), (x + h, y + h)]
}

fn split_all(blocks: &[(usize, usize)], b: usize) -> Vec<(usize, usize)> {
    blocks
        .iter()
        .flat_map(|&(x, y)| children(x, y, b))
        .collect()
}

/// Depth-first position of a leaf: top-level block index, then the Z-order
/// of its corner inside that block.
fn tree_order_key(
    r: &TransformRecord,
    max_range: usize,
    min_range: usize,
    top_cols: usize,
) -> (usize, u64) {
    let (tx, ty) = (r.range_x / max_range, r.range_y / max_range);
    let lx = ((r.range_x % max_range) / min_range) as u64;
    let ly = ((r.range_y % max_range) / min_range) as u64;
    let mut z = 0u64;
    for bit in (0..16).rev() {
        z = (z << 2) | (((ly >> bit) & 1) << 1) | ((lx >> bit) & 1);
    }
    (ty * top_cols + tx, z)
}
