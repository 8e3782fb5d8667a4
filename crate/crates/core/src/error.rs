//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: missing column `{column}`")]
    Schema { path: String, column: String },

    #[error("{path}:{row}: cannot parse `{value}` in column `{column}` as a number")]
    Parse {
        path: String,
        row: usize,
        column: String,
        value: String,
    },

    #[error("inconsistent subjects between longitudinal and survival files: {0}")]
    Consistency(String),

    #[error("formula references unknown column `{0}`")]
    Formula(String),

    #[error("parameter vector has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite {what} (subject {subject})")]
    Numeric { what: String, subject: usize },

    #[error("degenerate knots: {0}")]
    Knots(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Usage(String),

    #[error("chain {chain}: no finite starting point after {attempts} attempts")]
    Init { chain: usize, attempts: usize },

    #[error("adaptation failed: {0}")]
    Adaptation(String),

    #[error("study failed for spec `{spec}`: {failed}/{total} replicates failed to fit")]
    Study {
        spec: String,
        failed: usize,
        total: usize,
    },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
