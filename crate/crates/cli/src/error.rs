use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("malformed data: {0}")]
    Data(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Core(#[from] spacetime::Error),

    #[error("{0} benchmark cell(s) failed")]
    BenchFailed(usize),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        use spacetime::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Data(_) => 4,
            CliError::Schema(_) => 5,
            CliError::Core(E::InvalidConfig { .. } | E::InfeasibleConfig(_)) => 2,
            CliError::Core(E::InvalidPanel(_)) => 4,
            CliError::Core(_) | CliError::BenchFailed(_) => 1,
        }
    }
}
