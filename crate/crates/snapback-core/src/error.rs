use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the snap-back pipeline.
///
/// Backend initialization failures (missing weights, device, codec) are kept
/// distinct from per-image inference failures so callers can abort on the
/// former and skip-and-log on the latter.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("cannot decode image {path}: {reason}")]
    ImageDecode { path: PathBuf, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("backend initialization failed: {0}")]
    BackendInit(String),

    #[error("inference failed for {source_id} at strength {strength}: {reason}")]
    Inference {
        source_id: String,
        strength: f64,
        reason: String,
    },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("feature {0} has no non-missing training values")]
    AllMissingFeature(String),

    #[error("labels contain a single class; need both 0 and 1")]
    SingleClass,

    #[error("cannot stratify: label {label} has {count} members")]
    TooFewPerClass { label: u8, count: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
