use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the factorization pipeline.
#[derive(Debug, Error)]
pub enum IcqfError {
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

    #[error("non-rectangular input: row {row} has {found} cells, expected {expected}")]
    NotRectangular {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("cannot parse cell at row {row}, column {col}: {value:?}")]
    BadCell {
        row: usize,
        col: usize,
        value: String,
    },

    #[error("empty row {0}: no observed entries")]
    EmptyRow(usize),

    #[error("empty column {0}: no observed entries")]
    EmptyColumn(usize),

    #[error("no observed entries")]
    EmptyMask,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("constant continuous confound {0:?} cannot be rescaled; drop it or declare it categorical")]
    ConstantConfound(String),

    #[error("confound {column:?} has level {level:?} not in its declared levels")]
    UnknownLevel { column: String, level: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("constraint set {set} violated: {detail}")]
    Constraint { set: &'static str, detail: String },

    #[error("non-finite value at iteration {iteration} in {stage}")]
    NonFinite { iteration: usize, stage: &'static str },

    #[error("{0}")]
    Invalid(String),
}

impl IcqfError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IcqfError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-friendly tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            IcqfError::Io { .. } => "io",
            IcqfError::Csv(_) => "csv",
            IcqfError::Json(_) => "json",
            IcqfError::NotRectangular { .. } => "not_rectangular",
            IcqfError::BadCell { .. } => "bad_cell",
            IcqfError::EmptyRow(_) => "empty_row",
            IcqfError::EmptyColumn(_) => "empty_column",
            IcqfError::EmptyMask => "empty_mask",
            IcqfError::Dimension(_) => "dimension",
            IcqfError::ConstantConfound(_) => "constant_confound",
            IcqfError::UnknownLevel { .. } => "unknown_level",
            IcqfError::Config(_) => "config",
            IcqfError::Constraint { .. } => "constraint",
            IcqfError::NonFinite { .. } => "non_finite",
            IcqfError::Invalid(_) => "invalid",
        }
    }
}

pub type Result<T> = std::result::Result<T, IcqfError>;
