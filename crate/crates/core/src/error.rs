use thiserror::Error;

/// Failures while parsing a binary PGM stream.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PgmError {
    #[error("bad magic: expected \"P5\"")]
    Magic,
    #[error("malformed or missing {0} field in PGM header")]
    Header(&'static str),
    #[error("{0} must be nonzero")]
    ZeroDimension(&'static str),
    #[error("maxval {0} unsupported (only 255)")]
    Maxval(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

/// Failures while reading a `.fic` stream.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected \"FIC1\"")]
    Magic,
    #[error("stream truncated")]
    Truncated,
    #[error("invalid header: {0}")]
    Header(String),
    #[error("inconsistent quadtree: {0}")]
    Tree(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Pgm(#[from] PgmError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("block request ({x},{y}) size {size} exceeds {width}x{height} image")]
    OutOfBounds {
        x: usize,
        y: usize,
        size: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid block: {0}")]
    InvalidBlock(String),
    #[error("isometry index {0} out of range 0..8")]
    Isometry(u8),
    #[error("block sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("domain pool: {0}")]
    Pool(String),
    #[error("image {width}x{height} not divisible by range size {range}")]
    Indivisible {
        width: usize,
        height: usize,
        range: usize,
    },
    #[error("code does not fit the image: {0}")]
    CorruptCode(String),
    #[error("value {0} outside quantizer range")]
    Quantizer(f64),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
