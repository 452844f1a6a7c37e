//! Error type shared by the fallible build and solve paths.

use std::fmt;

#[derive(Debug, Clone)]
pub enum Error {
    /// Grid sizes, cycle parameters, or configuration keys that cannot be
    /// honored.
    InvalidConfig(String),
    /// A relaxation diagonal contains a (near-)zero entry.
    SingularDiagonal(String),
    /// A dense factorization failed (coarse solve or patch inversion).
    SingularMatrix(String),
    /// Two Vanka patches classified into the same group have different
    /// matrices.
    PatchGroupMismatch(String),
    /// Non-finite values encountered during an iterative solve.
    NonFinite(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidConfig(s) => write!(f, "invalid configuration: {s}"),
            Error::SingularDiagonal(s) => write!(f, "singular diagonal: {s}"),
            Error::SingularMatrix(s) => write!(f, "singular matrix: {s}"),
            Error::PatchGroupMismatch(s) => write!(f, "patch group mismatch: {s}"),
            Error::NonFinite(s) => write!(f, "non-finite values: {s}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
