use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    MalformedLine { line: usize, msg: String },

    #[error("line {line}: coordinate ({x}, {y}) outside {width}x{height} sensor")]
    OutOfBounds {
        line: usize,
        x: u64,
        y: u64,
        width: u32,
        height: u32,
    },

    #[error("line {line}: polarity {value} not in {{0, 1}}")]
    BadPolarity { line: usize, value: i64 },

    #[error("decreasing timestamp at line {line}")]
    DecreasingTimestamp { line: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("block coverage: {0}")]
    BlockCoverage(String),

    #[error("non-finite loss during {phase} (epoch {epoch}, batch {batch}): {loss}")]
    NonFiniteLoss {
        phase: &'static str,
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("symbol range: {0}")]
    SymbolRange(String),

    #[error("symbol {0} absent from table")]
    UnknownSymbol(i64),

    #[error("invalid code table: {0}")]
    InvalidTable(String),

    #[error("invalid prefix at bit {0}")]
    InvalidPrefix(u64),

    #[error("bits exhausted after {decoded} of {expected} symbols")]
    BitsExhausted { decoded: usize, expected: usize },

    #[error("{0} trailing unconsumed payload bits")]
    TrailingBits(u64),

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("truncated input: {0}")]
    Truncated(&'static str),

    #[error("format: {0}")]
    Format(String),

    #[error("model/stream mismatch: {0}")]
    Mismatch(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Short category tag used in CLI error lines.
    pub fn category(&self) -> &'static str {
        match self {
            Error::MalformedLine { .. }
            | Error::OutOfBounds { .. }
            | Error::BadPolarity { .. }
            | Error::DecreasingTimestamp { .. } => "input",
            Error::InvalidArgument(_) | Error::Config(_) => "config",
            Error::DimensionMismatch(_) | Error::BlockCoverage(_) => "shape",
            Error::NonFiniteLoss { .. } => "training",
            Error::SymbolRange(_)
            | Error::UnknownSymbol(_)
            | Error::InvalidTable(_)
            | Error::InvalidPrefix(_)
            | Error::BitsExhausted { .. }
            | Error::TrailingBits(_) => "entropy",
            Error::BadMagic { .. }
            | Error::UnsupportedVersion(_)
            | Error::ChecksumMismatch { .. }
            | Error::Truncated(_)
            | Error::Format(_) => "format",
            Error::Mismatch(_) => "mismatch",
            Error::Io(_) => "io",
        }
    }
}
