//! Rule configuration.
//!
//! Every threshold the cascade compares against lives here. The struct
//! serializes to a flat JSON object so that a session can patch individual
//! fields and the audit trail can name them one by one.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Thresholds and parameters of the detection cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    // Prolongation
    /// Minimum prolongation length in syllable periods.
    pub alpha: f64,
    /// Frame-to-frame MFCC correlation needed to extend a stationary segment.
    pub theta_sim: f64,
    /// Maximum F0 change (Hz) between consecutive voiced frames.
    pub theta_f0: f64,
    /// Minimum harmonic-to-noise ratio (dB) of a prolonged frame.
    pub theta_hnr: f64,
    pub f0_gate_enabled: bool,
    pub hnr_gate_enabled: bool,
    pub rate_normalization_enabled: bool,
    /// Minimum duration used when rate normalization is off.
    pub fixed_t_min_s: f64,

    // Sound repetition
    pub dtw_window_frames: usize,
    pub theta_dtw: f64,
    /// Energy-ACF peaks a window needs before it counts as a repetition.
    pub min_cycles: usize,
    /// Energy windows flatter than this (peak to trough, dB) have no cycles.
    pub cycle_min_depth_db: f64,
    /// Longest repetition cycle, in syllable periods. Slower cycles are
    /// ordinary syllable rhythm.
    pub max_cycle_period_syll: f64,
    pub acf_weight_energy: f64,
    pub acf_weight_flux: f64,
    pub acf_weight_centroid: f64,
    pub theta_r: f64,
    pub acf_lag_min_s: f64,
    pub acf_lag_max_s: f64,

    // Word repetition
    pub theta_word_dtw: f64,
    pub word_window_s: f64,

    // Blocks
    pub block_silence_s: f64,
    pub block_preflux_s: f64,
    /// Percentile of the flux track a pre-silence spike must exceed.
    pub flux_spike_percentile: f64,
    /// Audible-block RMS ceiling relative to the median speech-frame RMS.
    pub audible_block_rms_db: f64,
    pub audible_block_centroid_hz: f64,
    pub audible_block_min_s: f64,

    // Cascade
    pub min_separation_s: f64,
    /// Cross-kind overlap, as a fraction of the shorter event, that triggers precedence.
    pub overlap_gate: f64,

    // Voice activity
    pub vad_noise_percentile: f64,
    pub vad_margin_db: f64,
    /// Absolute energy floor (dBFS) below which a frame is never speech.
    pub vad_min_db: f64,
    pub vad_hangover_s: f64,
    /// Internal silences longer than this are cut at ingestion.
    pub trim_silence_s: f64,
    /// Silence kept on each side of a cut.
    pub trim_keep_s: f64,

    // Speaking rate
    pub nuclei_band_low_hz: f64,
    pub nuclei_band_high_hz: f64,
    pub nuclei_smoothing_s: f64,
    pub nuclei_prominence_db: f64,
    pub nuclei_min_separation_s: f64,
    pub min_speech_s: f64,
    /// Rate assumed when a recording has too little speech to measure one.
    pub fallback_speaking_rate: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            alpha: 1.2,
            theta_sim: 0.92,
            theta_f0: 15.0,
            theta_hnr: 10.0,
            f0_gate_enabled: true,
            hnr_gate_enabled: true,
            rate_normalization_enabled: true,
            fixed_t_min_s: 0.25,

            dtw_window_frames: 30,
            theta_dtw: 0.3,
            min_cycles: 2,
            cycle_min_depth_db: 3.0,
            max_cycle_period_syll: 0.6,
            acf_weight_energy: 1.0 / 3.0,
            acf_weight_flux: 1.0 / 3.0,
            acf_weight_centroid: 1.0 / 3.0,
            theta_r: 0.5,
            acf_lag_min_s: 0.05,
            acf_lag_max_s: 0.4,

            theta_word_dtw: 0.5,
            word_window_s: 1.5,

            block_silence_s: 0.35,
            block_preflux_s: 0.10,
            flux_spike_percentile: 90.0,
            audible_block_rms_db: -30.0,
            audible_block_centroid_hz: 2000.0,
            audible_block_min_s: 0.20,

            min_separation_s: 0.10,
            overlap_gate: 0.30,

            vad_noise_percentile: 5.0,
            vad_margin_db: 6.0,
            vad_min_db: -70.0,
            vad_hangover_s: 0.20,
            trim_silence_s: 2.0,
            trim_keep_s: 0.25,

            nuclei_band_low_hz: 300.0,
            nuclei_band_high_hz: 2500.0,
            nuclei_smoothing_s: 0.05,
            nuclei_prominence_db: 3.0,
            nuclei_min_separation_s: 0.12,
            min_speech_s: 0.5,
            fallback_speaking_rate: 4.0,
        }
    }
}

/// One field changed by a patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldChange {
    pub field: String,
    pub old: Value,
    pub new: Value,
}

impl RuleConfig {
    /// The reduced form with only the MFCC-similarity gate on prolongations.
    pub fn similarity_only() -> Self {
        Self {
            f0_gate_enabled: false,
            hnr_gate_enabled: false,
            ..Self::default()
        }
    }

    /// Minimum prolongation duration for a recording spoken at `speaking_rate`.
    pub fn t_min(&self, speaking_rate: f64) -> f64 {
        if self.rate_normalization_enabled {
            self.alpha / speaking_rate
        } else {
            self.fixed_t_min_s
        }
    }

    pub fn acf_weights(&self) -> [f64; 3] {
        [
            self.acf_weight_energy,
            self.acf_weight_flux,
            self.acf_weight_centroid,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("theta_f0", self.theta_f0),
            ("theta_hnr", self.theta_hnr),
            ("fixed_t_min_s", self.fixed_t_min_s),
            ("theta_dtw", self.theta_dtw),
            ("cycle_min_depth_db", self.cycle_min_depth_db),
            ("max_cycle_period_syll", self.max_cycle_period_syll),
            ("theta_r", self.theta_r),
            ("acf_lag_min_s", self.acf_lag_min_s),
            ("acf_lag_max_s", self.acf_lag_max_s),
            ("theta_word_dtw", self.theta_word_dtw),
            ("word_window_s", self.word_window_s),
            ("block_silence_s", self.block_silence_s),
            ("block_preflux_s", self.block_preflux_s),
            ("audible_block_centroid_hz", self.audible_block_centroid_hz),
            ("audible_block_min_s", self.audible_block_min_s),
            ("min_separation_s", self.min_separation_s),
            ("vad_margin_db", self.vad_margin_db),
            ("vad_hangover_s", self.vad_hangover_s),
            ("trim_silence_s", self.trim_silence_s),
            ("trim_keep_s", self.trim_keep_s),
            ("nuclei_band_low_hz", self.nuclei_band_low_hz),
            ("nuclei_band_high_hz", self.nuclei_band_high_hz),
            ("nuclei_smoothing_s", self.nuclei_smoothing_s),
            ("nuclei_prominence_db", self.nuclei_prominence_db),
            ("nuclei_min_separation_s", self.nuclei_min_separation_s),
            ("min_speech_s", self.min_speech_s),
            ("fallback_speaking_rate", self.fallback_speaking_rate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        let unit_open = [
            ("theta_sim", self.theta_sim),
            ("overlap_gate", self.overlap_gate),
        ];
        for (name, v) in unit_open {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in (0, 1), got {v}"
                )));
            }
        }
        if !(self.audible_block_rms_db.is_finite() && self.audible_block_rms_db < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "audible_block_rms_db must be a finite negative level, got {}",
                self.audible_block_rms_db
            )));
        }
        if !self.vad_min_db.is_finite() || self.vad_min_db >= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "vad_min_db must be a finite negative level, got {}",
                self.vad_min_db
            )));
        }
        for (name, p) in [
            ("flux_spike_percentile", self.flux_spike_percentile),
            ("vad_noise_percentile", self.vad_noise_percentile),
        ] {
            if !(0.0..=100.0).contains(&p) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in [0, 100], got {p}"
                )));
            }
        }
        let weights = self.acf_weights();
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig(
                "ACF weights must be non-negative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!(
                "ACF weights must sum to 1, got {sum}"
            )));
        }
        if self.acf_lag_min_s >= self.acf_lag_max_s {
            return Err(Error::InvalidConfig(
                "acf_lag_min_s must be below acf_lag_max_s".into(),
            ));
        }
        if self.nuclei_band_low_hz >= self.nuclei_band_high_hz || self.nuclei_band_high_hz > 8000.0
        {
            return Err(Error::InvalidConfig(
                "nuclei band must satisfy 0 < low < high <= 8000 Hz".into(),
            ));
        }
        if self.dtw_window_frames < 4 || !self.dtw_window_frames.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "dtw_window_frames must be an even count >= 4, got {}",
                self.dtw_window_frames
            )));
        }
        if self.min_cycles == 0 {
            return Err(Error::InvalidConfig("min_cycles must be >= 1".into()));
        }
        Ok(())
    }

    /// Parse a full or partial config from JSON; missing fields take defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RuleConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_map(&self) -> Map<String, Value> {
        match serde_json::to_value(self).expect("config serializes") {
            Value::Object(map) => map,
            _ => unreachable!("config is a struct"),
        }
    }

    /// Apply a partial patch. Either every field is applied and the result
    /// validates, or nothing changes and an error is returned.
    pub fn patched(&self, patch: &Map<String, Value>) -> Result<(RuleConfig, Vec<FieldChange>)> {
        let mut map = self.to_json_map();
        let mut changes = Vec::new();
        for (field, new) in patch {
            let Some(old) = map.get(field) else {
                return Err(Error::InvalidConfig(format!("unknown field `{field}`")));
            };
            if old != new {
                changes.push(FieldChange {
                    field: field.clone(),
                    old: old.clone(),
                    new: new.clone(),
                });
            }
            map.insert(field.clone(), new.clone());
        }
        let cfg: RuleConfig = serde_json::from_value(Value::Object(map))
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        changes.sort_by(|a, b| a.field.cmp(&b.field));
        Ok((cfg, changes))
    }
}
