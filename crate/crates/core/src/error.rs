use thiserror::Error;

/// Errors raised by the encodings, the training loop and the file loaders.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("direction norm {0} is too far from 1")]
    NonUnitDirection(f64),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("stale activation cache: {0}")]
    StaleCache(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated data: {0}")]
    Truncated(String),

    #[error("unsupported format variant: {0}")]
    UnsupportedVariant(String),

    #[error("bad run length: {0}")]
    BadRunLength(String),

    #[error("bad magic bytes")]
    BadMagic,

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
