use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("wav error on {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("{path}: expected 16000 Hz mono 16-bit PCM, found {found}")]
    AudioFormat { path: PathBuf, found: String },
    #[error("{path}: missing alignment file")]
    MissingAlignment { path: PathBuf },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("label '{0}' is not in the class map")]
    UnknownLabel(String),
    #[error("invalid alignment: {0}")]
    Alignment(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("input too short: need at least {needed} samples, found {found}")]
    TooShort { needed: usize, found: usize },
    #[error("cannot normalize an all-zero signal")]
    SilentSignal,
    #[error("zero-norm vector passed to a normalized kernel")]
    ZeroNorm,
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("classes absent from the training data: {0:?}")]
    MissingClasses(Vec<String>),
    #[error("model format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
