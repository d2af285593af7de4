use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input at {location}: {message}")]
    Malformed { location: String, message: String },

    #[error("non-finite value at {location}")]
    NonFiniteValue { location: String },

    #[error("row length mismatch at {location}: expected {expected} values, found {found}")]
    RowLengthMismatch {
        location: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid dimension {0:?}, expected one of x, y, z")]
    InvalidDimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("format mismatch: {0}")]
    FormatMismatch(String),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("corrupt stream: {0}")]
    CorruptStream(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("symbol {symbol} missing from {table} table")]
    MissingSymbol { table: &'static str, symbol: u32 },

    #[error("quantizer mismatch: coefficient {value} exceeds scale {max_abs}")]
    QuantizerMismatch { value: f64, max_abs: f64 },

    #[error("singular value decomposition failed: {0}")]
    SvdFailure(String),

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn corrupt(msg: impl Into<String>) -> Self {
        Error::CorruptStream(msg.into())
    }
}
