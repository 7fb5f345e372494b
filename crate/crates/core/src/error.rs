use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the laboratory.
///
/// The variants are grouped so that the runner can map them onto exit
/// classes: usage, configuration, and runtime.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("degenerate spectrum: singular value gap {gap:e} below {threshold:e}")]
    DegenerateSpectrum { gap: f64, threshold: f64 },

    #[error("training diverged at step {step}: entry magnitude {magnitude:e}")]
    Divergence { step: usize, magnitude: f64 },

    #[error("cannot normalize sample {sample}: sub-vector has zero norm")]
    Normalization { sample: usize },

    #[error("state error: {0}")]
    State(String),

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("config validation error for `{key}`: {message}")]
    ConfigValidation { key: String, message: String },

    #[error("unknown command `{0}`")]
    UnknownCommand(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the runner: 1 usage, 2 config, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownCommand(_) => 1,
            Error::ConfigParse { .. } | Error::ConfigValidation { .. } => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
