use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent or invalid dimensions (antenna counts, subspace sizes, shapes).
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A linear-algebra step failed (e.g. a matrix that must be positive definite was not).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A closed-form evaluation lost too many significant digits to be trusted.
    #[error("numerical precision error: {0}")]
    Precision(String),

    /// Too many Monte-Carlo draws were discarded because the per-trial algorithm did not converge.
    #[error("{method}: nonconvergence budget exhausted ({used} trials used, {discarded} discarded)")]
    NonConvergence {
        method: String,
        used: usize,
        discarded: usize,
    },

    /// Malformed CSV or configuration input.
    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                other => Error::Format(format!("{other:?}")),
            }
        } else {
            Error::Format(e.to_string())
        }
    }
}
