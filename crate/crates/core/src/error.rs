use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CmmsError>;

#[derive(Debug, Error)]
pub enum CmmsError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file. `row` and `col` are 1-based when known.
    #[error("parse error{}: {msg}", location(*.row, *.col))]
    Parse {
        row: Option<usize>,
        col: Option<usize>,
        msg: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("report format error: {0}")]
    Report(String),
}

fn location(row: Option<usize>, col: Option<usize>) -> String {
    match (row, col) {
        (Some(r), Some(c)) => format!(" at row {r}, col {c}"),
        (Some(r), None) => format!(" at row {r}"),
        (None, Some(c)) => format!(" at col {c}"),
        (None, None) => String::new(),
    }
}

impl CmmsError {
    pub(crate) fn parse(row: Option<usize>, col: Option<usize>, msg: impl Into<String>) -> Self {
        CmmsError::Parse {
            row,
            col,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CmmsError::Io {
            path: path.into(),
            source,
        }
    }
}
