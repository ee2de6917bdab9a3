use std::path::PathBuf;

/// Errors raised anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("label at row {row} is not positive ({value})")]
    NonPositiveLabel { row: usize, value: f64 },

    #[error("non-finite value in {what}")]
    NonFiniteValue { what: &'static str },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate data: {0}")]
    DegenerateData(&'static str),

    #[error("all sample weights are zero")]
    AllWeightsZero,

    #[error("invalid value for `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("constraint set is empty: {0}")]
    Infeasible(String),

    #[error("window of {window} s is longer than the {len}-sample event")]
    WindowTooLong { window: usize, len: usize },

    #[error("unsupported window {0} s (expected one of 60, 90, 120, 150, 180)")]
    UnsupportedWindow(usize),

    #[error("true value at index {0} is zero")]
    ZeroTrueValue(usize),

    #[error("baseline error must be positive, got {0}")]
    NonPositiveBaseline(f64),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
