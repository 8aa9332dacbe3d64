use std::path::PathBuf;

use thiserror::Error;

use crate::context::ContextField;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid rating {value} (ratings must be strictly positive){}", row_suffix(*.row))]
    InvalidRating { value: f64, row: Option<usize> },

    #[error("context field {field} code {code} exceeds its maximum {max}")]
    ContextOutOfRange { field: ContextField, code: u32, max: u32 },

    #[error("invalid context code {code} for field {field}{}", row_suffix(*.row))]
    InvalidContextCode {
        field: ContextField,
        code: i64,
        row: Option<usize>,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row} (line {line}), column {column}: cannot parse {value:?}")]
    Parse {
        row: usize,
        line: u64,
        column: String,
        value: String,
    },

    #[error("degenerate split: {train} train / {test} test interactions")]
    DegenerateSplit { train: usize, test: usize },

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("no context available for unseen pair (user {user}, item {item})")]
    MissingContext { user: usize, item: usize },

    #[error("length mismatch: {left} predictions vs {right} truths")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("rank-frequency slope undefined: {positive} item(s) with positive frequency, need at least 2")]
    UndefinedSlope { positive: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn row_suffix(row: Option<usize>) -> String {
    match row {
        Some(r) => format!(" at row {r}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the input data rather than by usage or
    /// configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::EmptyDataset
                | Error::InvalidRating { .. }
                | Error::ContextOutOfRange { .. }
                | Error::InvalidContextCode { .. }
                | Error::Schema(_)
                | Error::Parse { .. }
                | Error::DegenerateSplit { .. }
                | Error::Csv(_)
        )
    }
}
