use std::fmt;

use gama::Error;

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or arguments that do not fit the input (exit 1).
    Usage(String),
    /// The solver did not certify a solution, or `--verify` disagreed (exit 2).
    Solver(String),
    /// Reading, parsing or writing files (exit 3).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    /// Wraps a library error raised while handling `path`.
    pub fn at(path: &std::path::Path, e: Error) -> Self {
        match CliError::from(e) {
            CliError::Io(msg) => CliError::Io(format!("{}: {msg}", path.display())),
            other => other,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Solver(m) => write!(f, "solver: {m}"),
            CliError::Io(m) => write!(f, "i/o: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidArgument(_) => CliError::Usage(msg),
            Error::Io(_)
            | Error::Parse { .. }
            | Error::NonFinite { .. }
            | Error::NotSymmetric { .. }
            | Error::DimensionMismatch { .. } => CliError::Io(msg),
            Error::NotPositiveDefinite { .. }
            | Error::InitialPointNotPd
            | Error::InfeasibleBounds
            | Error::NonConvergence(_)
            | Error::Block { .. } => CliError::Solver(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
