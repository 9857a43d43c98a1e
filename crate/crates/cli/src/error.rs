use std::path::{Path, PathBuf};

use thiserror::Error;

/// Exit status for command-line usage mistakes.
pub const EXIT_USAGE: i32 = 1;
/// Exit status for unreadable, malformed or inconsistent input.
pub const EXIT_INPUT: i32 = 2;
/// Exit status for failures inside the numerical pipeline.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}:{line}: byte offset {offset}: {msg}")]
    Malformed { path: PathBuf, line: usize, offset: usize, msg: String },

    #[error("{path}: {msg}")]
    Json { path: PathBuf, msg: String },

    #[error("{path}: missing or wrong unit tag: {msg}")]
    Units { path: PathBuf, msg: String },

    #[error("{path}: acoustic sum rule violated by {residual:.3e} eV/Å² (tolerance {tolerance:.1e}); set enforce_sum_rule to repair")]
    SumRule { path: PathBuf, residual: f64, tolerance: f64 },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{0} example(s) failed")]
    ExamplesFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) | CliError::ExamplesFailed(_) => EXIT_NUMERICAL,
            _ => EXIT_INPUT,
        }
    }

    /// Short machine-readable tag printed with the message.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Malformed { .. } => "malformed-record",
            CliError::Json { .. } => "bad-document",
            CliError::Units { .. } => "units",
            CliError::SumRule { .. } => "sum-rule",
            CliError::Validation(_) => "validation",
            CliError::Numerical(_) => "numerical",
            CliError::ExamplesFailed(_) => "examples",
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

impl From<spinrelax_core::Error> for CliError {
    fn from(e: spinrelax_core::Error) -> Self {
        use spinrelax_core::Error as E;
        match e {
            E::Eigen { .. } | E::Numerical(_) | E::NotHermitian { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
