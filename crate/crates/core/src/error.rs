//! Error types shared across the toolkit.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the modeling and analysis operations.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a physical or mathematical precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A requested value lies outside the reachable range of a model.
    #[error("range error: {0}")]
    Range(String),

    /// A calibration target could not be met.
    #[error("calibration error: {0}")]
    Calibration(String),

    /// An object was used in the wrong state (e.g. normalization tag).
    #[error("state error: {0}")]
    State(String),

    /// A configuration file failed validation; the message names the field.
    #[error("config error: {0}")]
    Config(String),

    /// Input data (traces, CSV rows) could not be parsed.
    #[error("data error: {0}")]
    Data(String),

    /// A numeric procedure failed to converge or produced non-finite values.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code convention: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::Numeric(_) => 4,
            _ => 2,
        }
    }
}
