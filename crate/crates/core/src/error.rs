use std::io;

use thiserror::Error;

pub type Result<T, E = HgnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HgnError {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller broke a shape or precondition contract.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite value in {term}: {detail}")]
    NonFinite { term: String, detail: String },

    #[error("corrupt dataset: {0}")]
    CorruptDataset(String),

    #[error("truncated dataset: {0}")]
    TruncatedDataset(String),

    #[error("unsupported version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl HgnError {
    /// Stable machine-readable category, printed by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            HgnError::Domain(_) => "domain",
            HgnError::Contract(_) => "contract",
            HgnError::Config(_) => "config",
            HgnError::Usage(_) => "usage",
            HgnError::NonFinite { .. } => "non-finite",
            HgnError::CorruptDataset(_) => "dataset-corrupt",
            HgnError::TruncatedDataset(_) => "dataset-truncated",
            HgnError::VersionMismatch { .. } => "version-mismatch",
            HgnError::Checkpoint(_) => "checkpoint",
            HgnError::Io(_) => "io",
        }
    }
}
