use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("invalid link: {0}")]
    InvalidLink(String),

    #[error("invalid source: {0}")]
    InvalidSource(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("singular system ({regime}): condition estimate {condition:.3e}")]
    Singular { condition: f64, regime: String },

    #[error("degenerate complex scaling |c| = {0:.3e}")]
    DegenerateScaling(f64),

    #[error("synchronization failed: {0}")]
    Sync(String),

    #[error("capture format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
