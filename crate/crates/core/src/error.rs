use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by ingestion, fitting, encoding and evaluation.
#[derive(Debug, Error)]
pub enum CbmError {
    #[error("unsupported moment count {0}: expected 1 or 2")]
    UnsupportedMomentCount(usize),

    #[error("target vector is empty")]
    EmptyTarget,

    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("target does not match task {task}: {detail}")]
    TargetMismatch { task: String, detail: String },

    #[error("undefined moment: {0}")]
    UndefinedMoment(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("unsupported model format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u64, supported: u64 },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CbmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CbmError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the caller's data, schema or model file
    /// rather than by the environment.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, CbmError::Io { .. } | CbmError::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, CbmError>;
