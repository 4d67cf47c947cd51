use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}:{line}: {message}", .file.display())]
    Csv { file: PathBuf, line: u64, message: String },

    #[error("missing stage output {}", .0.display())]
    MissingOutput(PathBuf),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Core(#[from] homlab::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 2 config, 3 solver failure, 4 invariant violation.
    pub fn exit_code(&self) -> i32 {
        use homlab::Error as E;
        match self {
            CliError::Core(E::NotConverged(_)) => 3,
            CliError::Invariant(_)
            | CliError::Core(E::NotElliptic { .. } | E::NotDivergenceFree(_) | E::NotOrthonormal(_)) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
