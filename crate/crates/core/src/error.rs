use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
///
/// The CLI maps these onto exit codes: configuration/input problems -> 2,
/// numeric aborts -> 3, I/O failures -> 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("csv row {row}: {reason}")]
    CsvRow { row: usize, reason: String },

    #[error("duplicate image id {0}")]
    DuplicateImageId(u64),

    #[error("unknown image id {0}")]
    UnknownImageId(u64),

    #[error("record {0} has no pixel data")]
    MissingPixels(u64),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),

    #[error(
        "degenerate same-laterality proportion {same}/{total}; reweighting weights are undefined"
    )]
    DegenerateProportion { same: usize, total: usize },

    #[error("embedding norm {0} outside unit tolerance")]
    NotUnitNorm(f64),

    #[error("numeric abort at epoch {epoch}, step {step}: {reason}")]
    NumericAbort {
        epoch: usize,
        step: usize,
        reason: String,
        batch_image_ids: Vec<u64>,
        sample_losses: Vec<f64>,
    },

    #[error("labels contain a single class")]
    SingleClass,

    #[error("probe set is empty")]
    EmptyProbeSet,

    #[error("split redrawn {attempts} times without containing both classes")]
    SplitRedrawExhausted { attempts: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
