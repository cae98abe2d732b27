//! Rule-based speech dysfluency detection.
//!
//! Audio is loaded and normalized ([`audio_io`]), turned into frame-level
//! acoustic tracks ([`features`]), scanned by four rule detectors
//! ([`detectors`]) and reconciled into a final report ([`cascade`]). Every
//! event carries the measurements that fired its rule.

pub mod audio_io;
pub mod cascade;
pub mod config;
pub mod detectors;
pub mod error;
pub mod eval;
pub mod features;
pub mod framing;
pub mod pipeline;
pub mod synthgen;

#[cfg(test)]
mod test_support;

pub use audio_io::{AudioBuffer, VadMask};
pub use cascade::{resolve, EventReport};
pub use config::RuleConfig;
pub use detectors::{DysfluencyEvent, Evidence, Kind, WordAlignment};
pub use error::{Error, Result};
pub use features::{FeatureSet, FrameSeries};
