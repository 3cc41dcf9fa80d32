//! Error type shared across the crate.

use std::fmt;
use std::path::PathBuf;

/// Errors produced by construction, estimation, and the experiment harness.
#[derive(Debug)]
pub enum Error {
    /// A parameter violated a documented precondition.
    InvalidArgument(String),
    /// Ensemble construction hit a degenerate (all-zero) column.
    DegenerateColumn(usize),
    /// A symmetric positive-definite solve or a bias factor broke down.
    NumericalBreakdown(String),
    /// The exhaustive search budget would be exceeded.
    BudgetExceeded { candidates: u128, budget: u128 },
    /// A config file line could not be parsed.
    Config { line: usize, message: String },
    /// I/O failure, with the path that was being accessed.
    Io { path: PathBuf, source: std::io::Error },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::DegenerateColumn(i) => {
                write!(f, "ensemble construction: column {i} is all zero")
            }
            Error::NumericalBreakdown(msg) => write!(f, "numerical breakdown: {msg}"),
            Error::BudgetExceeded { candidates, budget } => write!(
                f,
                "exhaustive search would enumerate {candidates} candidates, budget is {budget}"
            ),
            Error::Config { line, message } => write!(f, "config line {line}: {message}"),
            Error::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
