use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failure of a CLI run; each kind maps to a fixed exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("solver failed: {0}")]
    Solver(#[source] bandopt_core::Error),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 config, 3 solver, 4 verification, 1 for I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Verification(_) => 4,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<bandopt_core::Error> for CliError {
    fn from(e: bandopt_core::Error) -> Self {
        use bandopt_core::Error as E;
        match e {
            E::InvalidParams(v) => CliError::Config(v.join("; ")),
            E::InvalidClaims(m) => CliError::Config(m),
            E::Domain(m) => CliError::Config(m),
            other => CliError::Solver(other),
        }
    }
}
