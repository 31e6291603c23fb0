use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("unsupported WFDB storage format {0}")]
    UnsupportedFormat(u16),

    #[error("truncated signal file: need {expected} bytes, found {actual}")]
    TruncatedSignal { expected: usize, actual: usize },

    #[error("no label for record {0}")]
    MissingLabel(String),

    #[error("cannot determine alarm type for record {0}")]
    UnknownAlarmType(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty signal")]
    EmptySignal,

    #[error("no beats to featurize")]
    EmptyBeats,

    #[error("empty input")]
    EmptyInput,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("signal of length {len} too short, need at least {min}")]
    SignalTooShort { len: usize, min: usize },

    #[error("empty coefficient band")]
    EmptyBand,

    #[error("training labels contain a single class")]
    SingleClass,

    #[error("AUC undefined: truth labels contain a single class")]
    UndefinedAuc,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("dataset has no usable records")]
    EmptyDataset,

    #[error("model file: {0}")]
    Model(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            line,
            reason: reason.into(),
        }
    }
}
