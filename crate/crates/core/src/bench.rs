//! Benchmark protocol (compression ratio, encode time and PSNR versus pool
//! size and s-mode), the per-level contrast histogram experiment, and the
//! floor-scaling entropy check.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codeformat::{compression_ratio, deserialize, serialize};
use crate::decoder::{decode, DecodeSettings};
use crate::encoder::{encode, EncoderConfig, SMode};
use crate::entropy_pool::{GrayHistogram, PoolSelection};
use crate::error::Result;
use crate::metrics::{format_psnr, psnr};
use crate::pixmap::GrayImage;

/// Range sizes reported in the CSV leaf columns.
pub const BENCH_LEVELS: [usize; 4] = [16, 8, 4, 2];

pub const BENCH_HEADER: [&str; 10] = [
    "image",
    "pool_size",
    "mode",
    "cr",
    "seconds",
    "psnr",
    "leaves_16",
    "leaves_8",
    "leaves_4",
    "leaves_2",
];

/// A named benchmark input; a load failure becomes an error row.
#[derive(Debug, Clone)]
pub struct BenchImage {
    pub id: String,
    pub image: Result<GrayImage, String>,
}

impl BenchImage {
    pub fn new(id: impl Into<String>, image: GrayImage) -> Self {
        Self {
            id: id.into(),
            image: Ok(image),
        }
    }

    pub fn failed(id: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            image: Err(reason.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchMetrics {
    pub cr: f64,
    pub seconds: f64,
    pub psnr: f64,
    /// Leaves at 16, 8, 4, 2.
    pub leaves: [usize; 4],
    pub stream_len: usize,
    pub collage_error: f64,
    pub decode_iterations: usize,
    pub final_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub image: String,
    pub pool_size: usize,
    pub mode: SMode,
    pub outcome: Result<BenchMetrics, String>,
}

impl BenchRow {
    fn csv_record(&self) -> Vec<String> {
        let mut rec = vec![
            self.image.clone(),
            self.pool_size.to_string(),
            self.mode.to_string(),
        ];
        match &self.outcome {
            Ok(m) => {
                rec.push(format!("{:.4}", m.cr));
                rec.push(format!("{:.6}", m.seconds));
                rec.push(format_psnr(m.psnr));
                rec.extend(m.leaves.iter().map(usize::to_string));
            }
            Err(e) => {
                rec.push(format!("ERR: {e}"));
                rec.extend(std::iter::repeat_n(String::new(), 6));
            }
        }
        rec
    }
}

/// Encode → serialize → deserialize → decode for one image and config.
/// Only the encode call is timed.
pub fn measure(image: &GrayImage, config: &EncoderConfig) -> Result<BenchMetrics> {
    let (code, stats) = encode(image, config)?;
    let stream = serialize(&code)?;
    let parsed = deserialize(&stream)?;
    let settings = DecodeSettings {
        iterations: config.decode_iterations,
        execution: config.execution,
        ..Default::default()
    };
    let decoded = decode(&parsed, &settings)?;
    let mut leaves = [0; 4];
    for (slot, b) in leaves.iter_mut().zip(BENCH_LEVELS) {
        *slot = code.records.iter().filter(|r| r.range_size == b).count();
    }
    Ok(BenchMetrics {
        cr: compression_ratio(image, &stream),
        seconds: stats.seconds,
        psnr: psnr(image, &decoded.image)?,
        leaves,
        stream_len: stream.len(),
        collage_error: stats.total_collage_error(),
        decode_iterations: decoded.iterations_used,
        final_delta: decoded.final_delta,
    })
}

/// Runs every (image, pool size, mode) combination sequentially so timed
/// rows do not compete for cores. Failures become error rows.
pub fn run_benchmark(
    images: &[BenchImage],
    pool_sizes: &[usize],
    modes: &[SMode],
    config: &EncoderConfig,
) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    for input in images {
        for &k in pool_sizes {
            for &mode in modes {
                let cfg = EncoderConfig {
                    pool_selection: PoolSelection::TopK(k),
                    s_mode: mode,
                    ..config.clone()
                };
                let outcome = match &input.image {
                    Ok(img) => measure(img, &cfg).map_err(|e| e.to_string()),
                    Err(e) => Err(e.clone()),
                };
                if let Err(e) = &outcome {
                    log::warn!("{} K={k} {mode}: {e}", input.id);
                }
                rows.push(BenchRow {
                    image: input.id.clone(),
                    pool_size: k,
                    mode,
                    outcome,
                });
            }
        }
    }
    rows
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BENCH_HEADER)?;
    for row in rows {
        w.write_record(row.csv_record())?;
    }
    w.flush()
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut buf = Vec::new();
    write_bench_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub const HISTOGRAM_BINS: usize = 20;

/// Distribution of the best contrast factor among ranges accepted at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelHistogram {
    pub level: usize,
    pub counts: [usize; HISTOGRAM_BINS],
    /// The raw values, kept for order statistics.
    pub samples: Vec<f64>,
}

impl LevelHistogram {
    pub fn from_samples(level: usize, samples: Vec<f64>) -> Self {
        let mut counts = [0; HISTOGRAM_BINS];
        for &s in &samples {
            let bin =
                ((s * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
            counts[bin] += 1;
        }
        Self {
            level,
            counts,
            samples,
        }
    }

    pub fn bin_edges(bin: usize) -> (f64, f64) {
        let w = 1.0 / HISTOGRAM_BINS as f64;
        (bin as f64 * w, (bin + 1) as f64 * w)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn median(&self) -> Option<f64> {
        if self.samples.is_empty() {
            return None;
        }
        let mut v = self.samples.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_lo", "bin_hi", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            let (lo, hi) = Self::bin_edges(i);
            w.write_record([format!("{lo:.2}"), format!("{hi:.2}"), c.to_string()])?;
        }
        w.flush()
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Encodes with least-squares contrast and histograms the clamped optimal
/// `s` of every accepted range, one histogram per level.
pub fn s_histogram(image: &GrayImage, config: &EncoderConfig) -> Result<Vec<LevelHistogram>> {
    let cfg = EncoderConfig {
        s_mode: SMode::LeastSquares,
        ..config.clone()
    };
    let (_, stats) = encode(image, &cfg)?;
    Ok(stats
        .levels
        .into_iter()
        .map(|l| LevelHistogram::from_samples(l.range_size, l.accepted_s))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropositionReport {
    pub trials: usize,
    pub n: usize,
    pub seed: u64,
    /// Trials with `H(floor(s1·Y)) <= H(floor(s2·Y))`.
    pub holds: usize,
    /// Trials where the two entropies were equal.
    pub ties: usize,
}

impl PropositionReport {
    pub fn frequency(&self) -> f64 {
        self.holds as f64 / self.trials as f64
    }
}

impl std::fmt::Display for PropositionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "trials={} n={} seed={} holds={} ties={} frequency={:.4}",
            self.trials,
            self.n,
            self.seed,
            self.holds,
            self.ties,
            self.frequency()
        )
    }
}

/// Entropy of `floor(s·y)` over the samples.
pub fn scaled_entropy(ys: &[u32], s: f64) -> f64 {
    GrayHistogram::from_levels(ys.iter().map(|&y| (s * f64::from(y)).floor() as i64)).entropy()
}

/// Returns `(holds, tie)` for one `(Y, s1, s2)` draw.
pub fn proposition_holds(ys: &[u32], s1: f64, s2: f64) -> (bool, bool) {
    let h1 = scaled_entropy(ys, s1);
    let h2 = scaled_entropy(ys, s2);
    (h1 <= h2, h1 == h2)
}

/// Draws `Y` uniform in `[1, 255]^n` and `0 < s1 < s2 < 1`, and counts how
/// often floor scaling by the smaller factor gives the smaller entropy.
pub fn proposition_check(trials: usize, n: usize, seed: u64) -> PropositionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut holds = 0;
    let mut ties = 0;
    let mut ys = vec![0u32; n];
    for _ in 0..trials {
        for y in ys.iter_mut() {
            *y = rng.gen_range(1..=255);
        }
        let a: f64 = rng.gen_range(f64::EPSILON..1.0);
        let b: f64 = rng.gen_range(f64::EPSILON..1.0);
        let (s1, s2) = if a <= b { (a, b) } else { (b, a) };
        let (ok, tie) = proposition_holds(&ys, s1, s2);
        holds += usize::from(ok);
        ties += usize::from(tie);
    }
    PropositionReport {
        trials,
        n,
        seed,
        holds,
        ties,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_benchmark_row() {
        let img = GrayImage::filled(16, 16, 60).unwrap();
        let rows = run_benchmark(
            &[BenchImage::new("flat", img)],
            &[256],
            &[SMode::Predefined],
            &EncoderConfig::default(),
        );
        assert_eq!(rows.len(), 1);
        let m = rows[0].outcome.as_ref().unwrap();
        assert!(m.cr > 1.0);
        assert!(m.seconds < 1.0);
        // offsets are quantized, so a flat image may land one level off
        assert!(m.psnr >= 48.0, "{}", m.psnr);
        let csv = bench_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "image,pool_size,mode,cr,seconds,psnr,leaves_16,leaves_8,leaves_4,leaves_2"
        );
        assert!(lines.next().unwrap().starts_with("flat,256,predefined,"));
    }

    #[test]
    fn failures_become_rows() {
        let rows = run_benchmark(
            &[
                BenchImage::failed("missing.pgm", "no such file"),
                BenchImage::new("odd", GrayImage::filled(20, 16, 0).unwrap()),
            ],
            &[32],
            &[SMode::Predefined, SMode::Sampled10],
            &EncoderConfig::default(),
        );
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.outcome.is_err()));
        let csv = bench_csv(&rows);
        assert!(csv.contains("missing.pgm,32,sampled10,ERR: no such file"));
    }

    #[test]
    fn flat_image_histogram_sits_in_lowest_bin() {
        let img = GrayImage::filled(64, 64, 10).unwrap();
        let hists = s_histogram(&img, &EncoderConfig::default()).unwrap();
        let top = hists.iter().find(|h| h.level == 16).unwrap();
        assert_eq!(top.counts[0], 16);
        assert_eq!(top.total(), 16);
        assert!(top
            .to_csv()
            .starts_with("bin_lo,bin_hi,count\n0.00,0.05,16\n"));
    }

    #[test]
    fn histogram_totals_match_leaf_counts() {
        let img = GrayImage::from_fn(64, 64, |x, y| ((x ^ y) * 4 + x) as u8).unwrap();
        let cfg = EncoderConfig {
            s_mode: SMode::LeastSquares,
            ..Default::default()
        };
        let (code, _) = encode(&img, &cfg).unwrap();
        for h in s_histogram(&img, &cfg).unwrap() {
            let leaves = code
                .records
                .iter()
                .filter(|r| r.range_size == h.level)
                .count();
            assert_eq!(h.total(), leaves);
        }
    }

    #[test]
    fn checkerboard_puts_mass_above_one_half_at_level_two() {
        // 3-pixel cells straddle every 2x2 range, so ranges are never flat
        let img = GrayImage::from_fn(
            64,
            64,
            |x, y| if (x / 3 + y / 3) % 2 == 0 { 30 } else { 220 },
        )
        .unwrap();
        let cfg = EncoderConfig {
            rms_tolerance: 0.5,
            ..Default::default()
        };
        let hists = s_histogram(&img, &cfg).unwrap();
        let h2 = hists.iter().find(|h| h.level == 2).unwrap();
        assert!(h2.counts[HISTOGRAM_BINS / 2..].iter().sum::<usize>() > 0);
    }

    #[test]
    fn median_of_samples() {
        let h = LevelHistogram::from_samples(4, vec![0.9, 0.1, 0.5, 1.0]);
        assert!((h.median().unwrap() - 0.7).abs() < 1e-12);
        assert_eq!((h.counts[18], h.counts[19]), (1, 1));
        assert_eq!(LevelHistogram::from_samples(2, vec![]).median(), None);
    }

    #[test]
    fn proposition_degenerate_cases() {
        let ys: Vec<u32> = (1..=200).collect();
        assert_eq!(proposition_holds(&ys, 0.4, 0.4), (true, true));
        let flat = vec![77; 64];
        assert_eq!(proposition_holds(&flat, 0.2, 0.7), (true, true));
    }

    #[test]
    fn proposition_check_is_seeded() {
        let a = proposition_check(200, 64, 5);
        let b = proposition_check(200, 64, 5);
        assert_eq!(a, b);
        assert!(a.holds <= a.trials);
        assert!(a.frequency() > 0.5);
    }
}
