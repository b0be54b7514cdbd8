use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] dustmns::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for invalid input, 3 for numerical or boundary failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        use dustmns::Error as E;
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Io { .. } => 4,
            CliError::Core(e) => match e {
                E::Io { .. } => 4,
                E::Degenerate(_)
                | E::Bracket { .. }
                | E::Convergence { .. }
                | E::Boundary(_)
                | E::Calibration(_) => 3,
                E::Domain(_)
                | E::Argument(_)
                | E::Parse { .. }
                | E::Integrity(_)
                | E::Data(_)
                | E::Model(_) => 2,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
