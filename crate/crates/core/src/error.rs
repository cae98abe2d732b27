use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the detection engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: unsupported audio format: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("{path}: empty audio file")]
    EmptyAudio { path: PathBuf },

    #[error("{path}: corrupt WAV header: {reason}")]
    CorruptHeader { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("audio too short: {samples} samples, need at least {needed}")]
    TooShort { samples: usize, needed: usize },

    #[error("insufficient speech: {speech_s:.3} s detected, need at least {needed_s:.3} s")]
    InsufficientSpeech { speech_s: f64, needed_s: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed alignment: {0}")]
    MalformedAlignment(String),

    #[error("recording id mismatch: hypothesis `{hyp}` vs reference `{reference}`")]
    RecordingMismatch { hyp: String, reference: String },

    #[error("time {t:.3} s outside recording of {duration:.3} s")]
    OutOfRange { t: f64, duration: f64 },

    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
