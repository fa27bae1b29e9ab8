use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported WAV {field}: {detail}")]
    WavFormat { field: &'static str, detail: String },

    #[error("WAV decode error: {0}")]
    WavDecode(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("length mismatch: observations have {observations} frames, prosody has {prosody}")]
    LengthMismatch { observations: usize, prosody: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("sequence of length {len} is shorter than the {states} model states")]
    SequenceTooShort { len: usize, states: usize },

    #[error("no training utterances for gender {0}")]
    EmptyGender(String),

    #[error("no training utterances for cell ({gender}, {emotion})")]
    EmptyCell { gender: String, emotion: String },

    #[error("unknown {kind} label: {label}")]
    UnknownLabel { kind: &'static str, label: String },

    #[error("train/test splits overlap in {what}: {items}")]
    OverlappingSplits { what: &'static str, items: String },

    #[error("both standard deviations are zero with unequal means")]
    ZeroPooledDeviation,

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
