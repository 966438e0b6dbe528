//! Gray-level histograms, block entropy and the entropy-ranked domain pool.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::pixmap::{decimated_window, mean, Block, GrayImage, Isometry};

/// Occurrence counts of each gray level present in a block.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GrayHistogram {
    counts: BTreeMap<i64, u64>,
    total: u64,
}

impl GrayHistogram {
    /// Fails if any sample is not an integer; decimated blocks carry
    /// quarter-integers and are not valid input.
    pub fn from_block(block: &Block) -> Result<Self> {
        let mut hist = Self::default();
        for &v in block.values() {
            if v.fract() != 0.0 || !v.is_finite() {
                return Err(Error::InvalidBlock(format!(
                    "entropy needs integer samples, found {v}"
                )));
            }
            hist.add(v as i64);
        }
        Ok(hist)
    }

    pub fn from_levels(levels: impl IntoIterator<Item = i64>) -> Self {
        let mut hist = Self::default();
        for level in levels {
            hist.add(level);
        }
        hist
    }

    fn add(&mut self, level: i64) {
        *self.counts.entry(level).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// `(level, count)` in ascending level order; every count is at least 1.
    pub fn counts(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.counts.iter().map(|(&l, &c)| (l, c))
    }

    pub fn distinct_levels(&self) -> usize {
        self.counts.len()
    }

    /// `(level, q / total)` in ascending level order.
    pub fn probabilities(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let total = self.total as f64;
        self.counts().map(move |(l, c)| (l, c as f64 / total))
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        entropy_from_counts(self.counts.values().copied(), self.total)
    }

    /// `ln(n! / Π q_j!)`: the log of the number of distinct rearrangements
    /// of the block's pixels.
    pub fn log_permutation_count(&self) -> f64 {
        let mut table = LogFactorials::default();
        let mut value = table.get(self.total);
        for &q in self.counts.values() {
            value -= table.get(q);
        }
        value.max(0.0)
    }
}

/// Counts must be in ascending level order so that every path through here
/// sums in the same order.
fn entropy_from_counts(counts: impl Iterator<Item = u64>, total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let mut h = 0.0;
    let mut distinct = 0usize;
    let mut uniform = None;
    for q in counts.filter(|&q| q > 0) {
        distinct += 1;
        uniform = match uniform {
            None => Some(Some(q)),
            Some(Some(u)) if u == q => Some(Some(u)),
            _ => Some(None),
        };
        let p = q as f64 / total;
        h -= p * p.ln();
    }
    // all levels equally likely: the sum collapses to ln k
    if let Some(Some(_)) = uniform {
        return (distinct as f64).ln();
    }
    h.max(0.0)
}

#[derive(Default)]
struct LogFactorials(Vec<f64>);

impl LogFactorials {
    fn get(&mut self, n: u64) -> f64 {
        let n = n as usize;
        if self.0.is_empty() {
            self.0.push(0.0);
        }
        while self.0.len() <= n {
            let k = self.0.len();
            let prev = self.0[k - 1];
            self.0.push(prev + (k as f64).ln());
        }
        self.0[n]
    }
}

/// Entropy (nats) of an integer-valued block.
pub fn block_entropy(block: &Block) -> Result<f64> {
    Ok(GrayHistogram::from_block(block)?.entropy())
}

/// Natural log of the number of pixel permutations that leave the block's
/// histogram unchanged.
pub fn log_permutation_count(block: &Block) -> Result<f64> {
    Ok(GrayHistogram::from_block(block)?.log_permutation_count())
}

/// Entropy of the raw `size`×`size` image window at `(x, y)`.
pub(crate) fn window_entropy(image: &GrayImage, x: usize, y: usize, size: usize) -> f64 {
    let mut counts = [0u64; 256];
    for row in y..y + size {
        for &p in image.row_slice(x, row, size) {
            counts[p as usize] += 1;
        }
    }
    entropy_from_counts(counts.into_iter(), (size * size) as u64)
}

/// Which candidate domain origins survive pruning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PoolSelection {
    /// The `K` highest-entropy origins.
    TopK(usize),
    /// Every origin whose entropy is at least the threshold.
    MinEntropy(f64),
}

impl Default for PoolSelection {
    fn default() -> Self {
        PoolSelection::TopK(256)
    }
}

/// One decimated, isometry-transformed domain block.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainEntry {
    pub origin_x: usize,
    pub origin_y: usize,
    pub isometry: Isometry,
    pub decimated: Block,
    pub mean: f64,
    /// `‖D − D̄·1‖²`
    pub centered_norm_sq: f64,
    /// Entropy of the raw (undecimated) source block.
    pub entropy: f64,
}

#[derive(Debug, Clone)]
pub struct DomainPool {
    pub domain_size: usize,
    pub step: usize,
    /// Candidate origins on the grid before pruning.
    pub candidate_origins: usize,
    pub retained_origins: usize,
    pub entries: Vec<DomainEntry>,
}

#[derive(Debug, Clone, Copy)]
struct RankedOrigin {
    x: usize,
    y: usize,
    entropy: f64,
}

impl DomainPool {
    pub fn build(
        image: &GrayImage,
        domain_size: usize,
        step: usize,
        selection: PoolSelection,
        exec: Execution,
    ) -> Result<Self> {
        if domain_size == 0 || !domain_size.is_multiple_of(2) {
            return Err(Error::Pool(format!(
                "domain size {domain_size} must be even"
            )));
        }
        if domain_size > image.width().min(image.height()) {
            return Err(Error::Pool(format!(
                "domain size {domain_size} exceeds {}x{} image",
                image.width(),
                image.height()
            )));
        }
        if step == 0 {
            return Err(Error::Pool("step must be at least 1".into()));
        }
        let per_row = (image.width() - domain_size) / step + 1;
        let per_col = (image.height() - domain_size) / step + 1;
        let candidates = per_row * per_col;

        let mut ranked = exec.map_range(candidates, |i| {
            let (x, y) = ((i % per_row) * step, (i / per_row) * step);
            RankedOrigin {
                x,
                y,
                entropy: window_entropy(image, x, y, domain_size),
            }
        });
        ranked.sort_by(|a, b| {
            b.entropy
                .total_cmp(&a.entropy)
                .then_with(|| (a.y, a.x).cmp(&(b.y, b.x)))
        });
        let keep = match selection {
            PoolSelection::TopK(k) => k.min(ranked.len()),
            PoolSelection::MinEntropy(tau) => ranked
                .iter()
                .take_while(|o| o.entropy.partial_cmp(&tau) != Some(Ordering::Less))
                .count(),
        };
        ranked.truncate(keep);
        if ranked.is_empty() {
            return Err(Error::Pool(format!("no domain survives {selection:?}")));
        }

        let half = domain_size / 2;
        let expanded = exec.map(&ranked, |o| {
            let base = decimated_window(image, o.x, o.y, half);
            Isometry::ALL
                .iter()
                .map(|&iso| {
                    let values = iso.transform(half, &base);
                    let m = mean(&values);
                    let centered_norm_sq = values.iter().map(|v| (v - m) * (v - m)).sum();
                    DomainEntry {
                        origin_x: o.x,
                        origin_y: o.y,
                        isometry: iso,
                        decimated: Block::new(half, values).expect("square by construction"),
                        mean: m,
                        centered_norm_sq,
                        entropy: o.entropy,
                    }
                })
                .collect::<Vec<_>>()
        });

        Ok(DomainPool {
            domain_size,
            step,
            candidate_origins: candidates,
            retained_origins: ranked.len(),
            entries: expanded.into_iter().flatten().collect(),
        })
    }

    /// Size of the decimated blocks, i.e. the range size this pool serves.
    pub fn block_size(&self) -> usize {
        self.domain_size / 2
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Retained origins in rank order.
    pub fn origins(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.entries
            .chunks(8)
            .map(|c| (c[0].origin_x, c[0].origin_y))
    }
}

pub fn build_domain_pool(
    image: &GrayImage,
    domain_size: usize,
    step: usize,
    selection: PoolSelection,
) -> Result<DomainPool> {
    DomainPool::build(image, domain_size, step, selection, Execution::default())
}
