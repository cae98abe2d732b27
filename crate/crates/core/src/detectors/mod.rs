//! The four rule detectors. Each emits candidate events carrying the exact
//! measurements that fired the rule, so that every decision can be
//! re-checked against a config later.

pub mod alignment;
pub mod blocks;
pub mod dtw;
pub mod prolongation;
pub mod repetition;
pub mod word;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio_io::VadMask;
use crate::config::RuleConfig;
use crate::features::FeatureSet;

pub use alignment::{WordAlignment, WordToken};
pub use blocks::detect_blocks;
pub use prolongation::detect_prolongations;
pub use repetition::{detect_sound_repetitions, repetition_score, RepetitionScore};
pub use word::detect_word_repetitions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Prolongation,
    SoundRep,
    WordRep,
    Block,
}

impl Kind {
    pub const ALL: [Kind; 4] = [
        Kind::Prolongation,
        Kind::SoundRep,
        Kind::WordRep,
        Kind::Block,
    ];

    /// Higher wins when events of different kinds overlap.
    pub fn precedence(self) -> u8 {
        match self {
            Kind::Block => 4,
            Kind::SoundRep => 3,
            Kind::Prolongation => 2,
            Kind::WordRep => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Prolongation => "prolongation",
            Kind::SoundRep => "sound_rep",
            Kind::WordRep => "word_rep",
            Kind::Block => "block",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "prolongation" | "prol" => Ok(Kind::Prolongation),
            "sound_rep" | "soundrep" | "sr" => Ok(Kind::SoundRep),
            "word_rep" | "wordrep" | "wr" => Ok(Kind::WordRep),
            "block" => Ok(Kind::Block),
            other => Err(format!("unknown dysfluency kind `{other}`")),
        }
    }
}

/// Measurements that fired a rule. Field names are the evidence keys shown
/// to clinicians and shared by the CLI and HTTP payloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Evidence {
    Prolongation {
        mean_sim: f64,
        min_sim: f64,
        /// Largest F0 step between voiced neighbours (0 if none were voiced).
        max_f0_delta_hz: f64,
        min_hnr_db: f64,
        duration_s: f64,
        speaking_rate: f64,
        t_min_s: f64,
        normalized_duration: f64,
    },
    SoundRepetition {
        dtw_cost: f64,
        cycle_count: usize,
        /// Lag of the first energy-ACF cycle peak.
        cycle_period_s: f64,
        speaking_rate: f64,
        repetition_score: f64,
        acf_lag_s: f64,
    },
    WordRepetition {
        matched_word: String,
        dtw_cost: f64,
        onset_gap_s: f64,
    },
    SilentBlock {
        silence_s: f64,
        preceding_flux: f64,
        flux_threshold: f64,
    },
    AudibleBlock {
        duration_s: f64,
        /// Loudest frame of the run relative to the median speech level.
        rms_rel_db: f64,
        /// Lowest centroid in the run.
        centroid_hz: f64,
    },
}

impl Evidence {
    pub fn kind(&self) -> Kind {
        match self {
            Evidence::Prolongation { .. } => Kind::Prolongation,
            Evidence::SoundRepetition { .. } => Kind::SoundRep,
            Evidence::WordRepetition { .. } => Kind::WordRep,
            Evidence::SilentBlock { .. } | Evidence::AudibleBlock { .. } => Kind::Block,
        }
    }

    /// Re-evaluate the firing rule from the recorded measurements alone.
    pub fn fires_under(&self, cfg: &RuleConfig) -> bool {
        match self {
            Evidence::Prolongation {
                min_sim,
                max_f0_delta_hz,
                min_hnr_db,
                duration_s,
                speaking_rate,
                ..
            } => {
                *min_sim > cfg.theta_sim
                    && (!cfg.f0_gate_enabled || *max_f0_delta_hz < cfg.theta_f0)
                    && (!cfg.hnr_gate_enabled || *min_hnr_db > cfg.theta_hnr)
                    && *duration_s > cfg.t_min(*speaking_rate)
            }
            Evidence::SoundRepetition {
                dtw_cost,
                cycle_count,
                cycle_period_s,
                speaking_rate,
                ..
            } => {
                *dtw_cost < cfg.theta_dtw
                    && *cycle_count >= cfg.min_cycles
                    && cycle_period_s * speaking_rate <= cfg.max_cycle_period_syll
            }
            Evidence::WordRepetition {
                dtw_cost,
                onset_gap_s,
                ..
            } => *onset_gap_s <= cfg.word_window_s && *dtw_cost < cfg.theta_word_dtw,
            Evidence::SilentBlock {
                silence_s,
                preceding_flux,
                flux_threshold,
            } => *silence_s > cfg.block_silence_s && *preceding_flux > *flux_threshold,
            Evidence::AudibleBlock {
                duration_s,
                rms_rel_db,
                centroid_hz,
            } => {
                *duration_s >= cfg.audible_block_min_s
                    && *rms_rel_db <= cfg.audible_block_rms_db
                    && *centroid_hz >= cfg.audible_block_centroid_hz
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DysfluencyEvent {
    pub kind: Kind,
    pub start_s: f64,
    pub end_s: f64,
    pub confidence: f64,
    pub evidence: Evidence,
}

impl DysfluencyEvent {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn overlap_s(&self, other: &DysfluencyEvent) -> f64 {
        (self.end_s.min(other.end_s) - self.start_s.max(other.start_s)).max(0.0)
    }

    pub fn is_valid(&self) -> bool {
        self.start_s.is_finite()
            && self.end_s.is_finite()
            && self.start_s < self.end_s
            && (0.0..=1.0).contains(&self.confidence)
            && self.evidence.kind() == self.kind
    }

    /// Shift both endpoints through `f` (used to undo ingestion trimming).
    pub fn remap(mut self, f: impl Fn(f64) -> f64) -> Self {
        self.start_s = f(self.start_s);
        self.end_s = f(self.end_s);
        self
    }
}

/// Candidate events per detector, before conflict resolution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Candidates {
    pub prolongations: Vec<DysfluencyEvent>,
    pub sound_reps: Vec<DysfluencyEvent>,
    pub word_reps: Vec<DysfluencyEvent>,
    pub blocks: Vec<DysfluencyEvent>,
}

impl Candidates {
    pub fn all(&self) -> impl Iterator<Item = &DysfluencyEvent> {
        self.prolongations
            .iter()
            .chain(&self.sound_reps)
            .chain(&self.word_reps)
            .chain(&self.blocks)
    }

    pub fn into_vec(self) -> Vec<DysfluencyEvent> {
        let mut v = self.prolongations;
        v.extend(self.sound_reps);
        v.extend(self.word_reps);
        v.extend(self.blocks);
        v
    }
}

/// Run every detector. Word repetitions are skipped without an alignment.
pub fn detect_all(
    fs: &FeatureSet,
    vad: &VadMask,
    alignment: Option<&WordAlignment>,
    cfg: &RuleConfig,
) -> Candidates {
    let word_reps = match alignment {
        Some(a) => detect_word_repetitions(fs, a, cfg),
        None => {
            log::info!("no word alignment supplied; word-repetition detector skipped");
            Vec::new()
        }
    };
    Candidates {
        prolongations: detect_prolongations(fs, cfg),
        sound_reps: detect_sound_repetitions(fs, cfg),
        word_reps,
        blocks: detect_blocks(fs, vad, cfg),
    }
}
