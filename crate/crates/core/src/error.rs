//! Error type shared by all core modules.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by tensor operations, network construction and training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Tensor shapes are incompatible for the requested operation.
    DimMismatch(String),
    /// An argument is out of its documented range.
    InvalidArgument(String),
    /// A network or run configuration violates its invariants.
    Config(String),
    /// A non-finite value appeared where the computation requires finite ones.
    Numeric(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::DimMismatch(msg.into())
}

pub(crate) fn arg_err(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
