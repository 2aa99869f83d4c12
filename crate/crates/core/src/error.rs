use std::path::PathBuf;

/// Errors surfaced by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter lies outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Submatrix indices do not fit inside the matrix.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// An exhaustive search would exceed the configured cap.
    #[error("enumeration too large: {0}")]
    EnumerationTooLarge(String),

    /// Alternating maximization did not reach a fixed point within the sweep cap.
    #[error("hill climb did not reach a fixed point within {0} sweeps")]
    NoFixedPoint(usize),

    /// A null table was applied to a configuration it was not built for.
    #[error("null table key mismatch: {0}")]
    TableKeyMismatch(String),

    /// Malformed textual input.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An I/O failure, annotated with the path involved.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
