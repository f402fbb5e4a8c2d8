use std::path::PathBuf;

/// Process exit code for input-shaped failures (bad files, bad config, empty corpora).
pub const EXIT_INPUT: i32 = 2;
/// Process exit code for numeric failures (non-finite gradients past the retry budget).
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate line: no tokens left after header stripping and masking")]
    DegenerateLine,
    #[error("empty session set: {0}")]
    EmptySessions(String),
    #[error("empty word vector table: {0}")]
    EmptyTable(String),
    #[error("word vector file malformed: {0}")]
    VectorFormat(String),
    #[error("config: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("label join: {0}")]
    Join(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numeric: {0}")]
    Numeric(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Maps every error onto the CLI exit-code contract: 2 input, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => EXIT_NUMERIC,
            _ => EXIT_INPUT,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
