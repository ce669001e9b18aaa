use std::path::PathBuf;

use thiserror::Error;

/// Process exit status for a successful run.
pub const EXIT_OK: i32 = 0;
/// The solver stopped on divergence or failed internally.
pub const EXIT_SOLVER: i32 = 1;
/// Command-line usage errors (reported by the argument parser).
pub const EXIT_USAGE: i32 = 2;
/// Parameters or step sizes were rejected.
pub const EXIT_VALIDATION: i32 = 3;
/// A file could not be read or written.
pub const EXIT_IO: i32 = 4;
/// An input file was read but its contents are malformed.
pub const EXIT_INPUT: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Input {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Config(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("solver: {0}")]
    Solver(ipdfp_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => EXIT_IO,
            CliError::Input { .. } => EXIT_INPUT,
            CliError::Config(_) | CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Solver(_) => EXIT_SOLVER,
        }
    }
}

impl From<ipdfp_core::Error> for CliError {
    fn from(e: ipdfp_core::Error) -> Self {
        use ipdfp_core::Error as E;
        match e {
            E::InvalidParameter { .. } | E::MetricRejected(_) | E::ZeroLine { .. } | E::Unsupported(_) => {
                CliError::Validation(e.to_string())
            }
            other => CliError::Solver(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
