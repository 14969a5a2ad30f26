use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {0}: must be at least 1")]
    InvalidDimension(usize),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("cannot bundle an empty list of hypervectors")]
    EmptyBundle,

    #[error("schema line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("attribute index {index} out of range 1..={alpha}")]
    AttributeOutOfRange { index: usize, alpha: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Zero-norm rows and similar inputs that have no meaningful cosine.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },

    #[error("class {0} is not among the training classes")]
    UnknownLabel(u32),

    #[error("missing embedding rows for samples {0:?}")]
    MissingSamples(Vec<u64>),

    #[error("split violation: {0}")]
    Split(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("sweep grid is empty")]
    EmptyGrid,

    #[error("{path}: {source}")]
    Format {
        path: String,
        #[source]
        source: FormatError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Problems found while decoding one of the on-disk formats.
#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported version {found} (expected {expected})")]
    UnsupportedVersion { expected: u32, found: u32 },

    #[error("truncated header")]
    TruncatedHeader,

    #[error("truncated payload at row {row}")]
    TruncatedPayload { row: usize },

    #[error("trailing bytes after payload ({0} bytes)")]
    TrailingBytes(usize),

    #[error("index has {index_rows} rows but payload has {rows}")]
    IndexRowCount { rows: usize, index_rows: usize },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

impl Error {
    pub(crate) fn format(path: impl Into<String>, source: FormatError) -> Self {
        Error::Format {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::format(
            path,
            FormatError::Malformed {
                line,
                message: message.into(),
            },
        )
    }
}
