//! Exit-code taxonomy: 0 ok, 2 usage, 3 I/O, 4 parse, 5 insufficient speech.

use std::fmt;

use dysfluency_core::Error as CoreError;

pub const USAGE: u8 = 2;
pub const IO: u8 = 3;
pub const PARSE: u8 = 4;
pub const INSUFFICIENT_SPEECH: u8 = 5;
const OTHER: u8 = 1;

/// An error that already knows its exit code.
#[derive(Debug)]
pub struct Coded {
    pub code: u8,
    pub message: String,
}

impl fmt::Display for Coded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Coded {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    Coded {
        code: USAGE,
        message: message.into(),
    }
    .into()
}

pub fn io(message: impl Into<String>) -> anyhow::Error {
    Coded {
        code: IO,
        message: message.into(),
    }
    .into()
}

/// The error chain on one line. Causes already quoted by the message
/// above them are skipped.
pub fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if out.ends_with(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(c) = cause.downcast_ref::<Coded>() {
            return c.code;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return core_code(e);
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return IO;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return PARSE;
        }
    }
    OTHER
}

fn core_code(e: &CoreError) -> u8 {
    match e {
        CoreError::Io { .. } => IO,
        CoreError::UnsupportedFormat { .. }
        | CoreError::EmptyAudio { .. }
        | CoreError::CorruptHeader { .. }
        | CoreError::InvalidConfig(_)
        | CoreError::Parse { .. }
        | CoreError::MalformedAlignment(_)
        | CoreError::RecordingMismatch { .. }
        | CoreError::OutOfRange { .. }
        | CoreError::InvalidSpec(_) => PARSE,
        CoreError::InsufficientSpeech { .. } | CoreError::TooShort { .. } => INSUFFICIENT_SPEECH,
        CoreError::InvalidArgument(_) => USAGE,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_survive_context() {
        let e = anyhow::Error::from(CoreError::InsufficientSpeech {
            speech_s: 0.1,
            needed_s: 0.5,
        })
        .context("calibrating x.wav");
        assert_eq!(code_for(&e), INSUFFICIENT_SPEECH);
        let e = anyhow::Error::from(CoreError::InvalidConfig("theta_sim".into()));
        assert_eq!(code_for(&e), PARSE);
        assert_eq!(code_for(&usage("x").context("y")), USAGE);
        assert_eq!(code_for(&anyhow::anyhow!("plain")), OTHER);
    }

    #[test]
    fn repeated_causes_are_dropped() {
        let e = anyhow::Error::from(CoreError::Io {
            path: "a.wav".into(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "gone"),
        })
        .context("detecting a.wav");
        assert_eq!(describe(&e), "detecting a.wav: a.wav: gone");
    }
}
