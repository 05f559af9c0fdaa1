//! Command-line frontend for the super-resolution engine.
//!
//! The engine crate is `no_std` and file-free; everything that touches
//! the filesystem lives here: PNG ingestion, the binary checkpoint
//! format, the training loop driver, and directory-level evaluation.

pub mod checkpoint;
pub mod eval;
pub mod io;
pub mod train_loop;

use std::fmt;

/// Failure classes, each mapped to a stable process exit code so scripts
/// can branch on what went wrong.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or invalid configuration — exit 1.
    Usage(String),
    /// Filesystem or file-format trouble — exit 2.
    Io(String),
    /// Numeric faults and failed verification checks — exit 3.
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Check(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Check(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ibmdn_core::Error> for CliError {
    fn from(e: ibmdn_core::Error) -> Self {
        match e {
            // Runtime arithmetic going non-finite is a check failure;
            // everything else the engine rejects is bad configuration.
            ibmdn_core::Error::NumericFault { .. } => CliError::Check(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
