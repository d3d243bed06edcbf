use std::path::PathBuf;

use thiserror::Error;

/// Broad failure category, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read or write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("load error{}: {message}", location(*.row, .column.as_deref()))]
    Load {
        row: Option<usize>,
        column: Option<String>,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("indicator '{indicator}' is constant and cannot be normalized")]
    ConstantColumn { indicator: String },

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training diverged during {stage} at epoch {epoch}: non-finite loss")]
    Divergence { stage: String, epoch: usize },

    #[error("sampling adequacy too low: KMO {kmo:.3} is below {gate:.2}")]
    Inadequate { kmo: f64, gate: f64 },

    #[error("invalid view partition: {0}")]
    Partition(String),

    #[error("cluster {cluster}: {message}")]
    Geometry { cluster: usize, message: String },

    #[error("cannot build grading standard: {0}")]
    Standard(String),

    #[error("malformed JSON document: {0}")]
    Json(#[from] serde_json::Error),
}

fn location(row: Option<usize>, column: Option<&str>) -> String {
    match (row, column) {
        (Some(r), Some(c)) => format!(" at row {r}, column '{c}'"),
        (Some(r), None) => format!(" at row {r}"),
        (None, Some(c)) => format!(" in column '{c}'"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Config(_) => ErrorKind::Config,
            Error::Load { .. }
            | Error::InsufficientData { .. }
            | Error::ConstantColumn { .. }
            | Error::Inadequate { .. }
            | Error::Partition(_)
            | Error::Json(_) => ErrorKind::Data,
            Error::Domain(_)
            | Error::UndefinedCorrelation(_)
            | Error::Singular(_)
            | Error::Degenerate(_)
            | Error::Divergence { .. }
            | Error::Geometry { .. }
            | Error::Standard(_) => ErrorKind::Numeric,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn load(
        row: Option<usize>,
        column: Option<&str>,
        message: impl Into<String>,
    ) -> Self {
        Error::Load {
            row,
            column: column.map(str::to_owned),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
