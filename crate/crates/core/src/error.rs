use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or dimensions that do not line up (bad network wiring or config).
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// Invalid configuration values.
    #[error("invalid config: {0}")]
    Config(String),
    /// Illegal use of an environment (bad action index, stepping a finished episode).
    #[error("environment error: {0}")]
    Env(String),
    /// A gradient, parameter or loss became NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),
    /// An enumeration would exceed its size budget.
    #[error("budget exceeded: {0}")]
    Budget(String),
    /// Every run of a sweep failed.
    #[error("run failed: {0}")]
    Run(String),
    #[error("checkpoint format: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
