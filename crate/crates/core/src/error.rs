use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column {column}: non-finite value {value:?}")]
    NonFinite {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: unknown label token {token:?}")]
    UnknownLabel { row: usize, token: String },

    #[error("missing column {0:?} in header")]
    MissingColumn(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("sample {0} has no label")]
    Unlabeled(usize),

    #[error("class {class} has {count} samples, need at least {needed}")]
    ClassTooSmall {
        class: String,
        count: usize,
        needed: usize,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },

    #[error("self-training step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("cross-validation repeat {repeat}, fold {fold}: {source}")]
    Fold {
        repeat: usize,
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("singular covariance matrix after ridge repair")]
    SingularCovariance,

    #[error("all class counts are zero")]
    AllZeroCounts,

    #[error("missing artifacts: {}", .0.join(", "))]
    MissingArtifacts(Vec<String>),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable tag for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::RaggedRow { .. } => "ragged_row",
            Error::NonNumeric { .. } => "non_numeric",
            Error::NonFinite { .. } => "non_finite",
            Error::UnknownLabel { .. } => "unknown_label",
            Error::MissingColumn(_) => "missing_column",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::EmptyDataset => "empty_dataset",
            Error::Unlabeled(_) => "unlabeled",
            Error::ClassTooSmall { .. } => "class_too_small",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Diverged { .. } => "diverged",
            Error::Step { source, .. } | Error::Fold { source, .. } => source.kind(),
            Error::SingularCovariance => "singular_covariance",
            Error::AllZeroCounts => "all_zero_counts",
            Error::MissingArtifacts(_) => "missing_artifacts",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
