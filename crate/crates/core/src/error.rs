use thiserror::Error;

pub type Result<T, E = LnsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LnsError {
    #[error("cannot quantize non-finite value {0}")]
    NonFinite(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of a negative value")]
    NegativeSqrt,
    #[error("invalid format: {0}")]
    InvalidFormat(String),
    #[error("table fingerprint {found} does not match format {expected}")]
    FormatMismatch { expected: String, found: String },
    #[error("negative correction-curve input d = {0}")]
    NegativeDelta(i64),
    #[error("empty fitting domain")]
    EmptyDomain,
    #[error("malformed table file: {0}")]
    MalformedTable(String),
    #[error("table invariant violated: {0}")]
    TableInvariant(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset line {line}: {msg}")]
    DatasetRow { line: usize, msg: String },
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LnsError {
    /// True for errors caused by bad inputs (files, configs, arguments) as
    /// opposed to failures while running.
    pub fn is_validation(&self) -> bool {
        !matches!(self, LnsError::Io(_))
    }
}
