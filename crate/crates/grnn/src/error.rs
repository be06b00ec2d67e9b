//! Error type shared by every module in the crate.

use std::fmt;

/// Crate-wide error enum. Variants map onto the CLI exit codes in `main`:
/// `Io`/`Format` are reported as I/O failures, `Numeric` as divergence,
/// everything else as usage errors.
#[derive(Debug)]
pub enum Error {
    /// Shape mismatch between matrices, vectors, or sequences.
    Dimension(String),
    /// A recurrent state that does not match the cell kind (e.g. LSTM without a memory cell).
    State(String),
    /// Invalid caller-supplied input (empty dataset, label out of range, bad config).
    Input(String),
    /// Non-finite values where finite ones are required (diverged training, NaN gradients).
    Numeric(String),
    /// Malformed file contents (IDX or checkpoint).
    Format(String),
    /// Underlying I/O failure.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(msg) => write!(f, "dimension error: {msg}"),
            Error::State(msg) => write!(f, "state error: {msg}"),
            Error::Input(msg) => write!(f, "input error: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
