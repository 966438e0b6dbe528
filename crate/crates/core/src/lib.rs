//! Grayscale fractal (PIFS) image codec.
//!
//! The encoder walks a 16→8→4→2 quadtree. At each level it searches an
//! entropy-pruned pool of decimated, isometry-expanded domain blocks, and
//! picks the contrast factor `s` from a small per-level candidate set
//! instead of scanning `[0, 1]`. A ten-sample scan and exact least squares
//! are available for comparison.
//!
//! ```
//! use fic_core::{decode, encode, psnr, DecodeSettings, EncoderConfig, GrayImage};
//!
//! let img = GrayImage::from_fn(64, 64, |x, y| (x * 2 + y) as u8).unwrap();
//! let (code, _stats) = encode(&img, &EncoderConfig::default()).unwrap();
//! let bytes = fic_core::serialize(&code).unwrap();
//! let back = fic_core::deserialize(&bytes).unwrap();
//! let out = decode(&back, &DecodeSettings::default()).unwrap();
//! assert!(psnr(&img, &out.image).unwrap() > 25.0);
//! ```

pub mod bench;
pub mod codeformat;
pub mod decoder;
pub mod encoder;
pub mod entropy_pool;
pub mod error;
pub mod metrics;
pub mod parallel;
pub mod pixmap;

pub use bench::{
    proposition_check, run_benchmark, s_histogram, BenchImage, BenchMetrics, BenchRow,
    LevelHistogram, PropositionReport,
};
pub use codeformat::{compression_ratio, dequantize_o, deserialize, quantize_o, serialize};
pub use decoder::{decode, iterate_once, DecodeSettings, Decoded};
pub use encoder::{
    encode, fixed_s_match, match_range, optimal_so, EncodeStats, EncoderConfig, FractalCode,
    SCodebook, SMode, SSchedule, TransformRecord,
};
pub use entropy_pool::{
    block_entropy, build_domain_pool, log_permutation_count, DomainEntry, DomainPool,
    GrayHistogram, PoolSelection,
};
pub use error::{Error, FormatError, PgmError, Result};
pub use metrics::psnr;
pub use parallel::Execution;
pub use pixmap::{
    apply_isometry, block_mean, decimate, extract_block, load_pgm, save_pgm, Block, GrayImage,
    Isometry,
};
