use thiserror::Error;

pub type Result<T> = std::result::Result<T, L3Error>;

#[derive(Debug, Error)]
pub enum L3Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid labels: {0}")]
    InvalidLabels(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("unsupported model format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("model document: {0}")]
    Document(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl L3Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        L3Error::InvalidParameter(msg.into())
    }
}
