use std::path::PathBuf;

use crate::FeatureId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("input file is empty")]
    EmptyFile,

    #[error("schema error: missing column `{column}`")]
    MissingColumn { column: String },

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error("dataset is empty after filtering")]
    EmptyDataset,

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("insufficient data: need at least {needed} rows, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("rank-deficient design: collinear columns {}", crate::format_features(.columns))]
    RankDeficient { columns: Vec<FeatureId> },

    #[error("too few rows for the model: {rows} rows for {params} parameters")]
    TooFewRows { rows: usize, params: usize },

    #[error("missing feature column `{0}`")]
    MissingFeature(FeatureId),

    #[error("forest was fitted without bootstrap; no out-of-bag data")]
    NoOutOfBag,

    #[error("no model available for features {{{}}}", crate::format_features(.available))]
    NoModel { available: Vec<FeatureId> },

    #[error("model bundle is corrupt: {0}")]
    Corrupt(String),

    #[error("unsupported bundle format version {found}; supported: {supported:?}")]
    UnsupportedVersion { found: u32, supported: Vec<u32> },

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the input data rather than by a model.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::EmptyFile
                | Error::MissingColumn { .. }
                | Error::Parse { .. }
                | Error::Csv(_)
                | Error::EmptyDataset
                | Error::InvalidData(_)
                | Error::InsufficientData { .. }
                | Error::LengthMismatch { .. }
                | Error::EmptyInput
        )
    }
}
