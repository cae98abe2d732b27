//! End-to-end detection: ingest, features, detectors, cascade.

use std::path::Path;

use crate::audio_io::{self, AudioBuffer, TimeMap, VadMask};
use crate::cascade::{resolve, EventReport};
use crate::config::RuleConfig;
use crate::detectors::{detect_all, Candidates, WordAlignment, WordToken};
use crate::error::Result;
use crate::features::{self, FeatureSet};
use crate::framing::{self, SAMPLE_RATE};

pub const TARGET_LEVEL_DB: f64 = -20.0;

/// Canonical analysis input: resampled, level-normalized, trimmed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub buffer: AudioBuffer,
    pub vad: VadMask,
    pub time_map: TimeMap,
    /// Duration of the input before trimming.
    pub original_duration_s: f64,
}

pub fn prepare(buf: &AudioBuffer, cfg: &RuleConfig) -> Result<Prepared> {
    let resampled = audio_io::resample(buf, SAMPLE_RATE)?;
    let original_duration_s = resampled.duration_s();
    let normalized = if resampled.is_empty() {
        resampled
    } else {
        let n = audio_io::normalize_loudness(&resampled, TARGET_LEVEL_DB)?;
        if n.silent {
            log::warn!("input is digital silence; level left unchanged");
        }
        n.buffer
    };
    let vad = audio_io::compute_vad(&normalized, cfg);
    let (buffer, time_map) = audio_io::trim_silence(&normalized, &vad, cfg);
    let vad = if time_map.is_identity() && buffer.len() == normalized.len() {
        vad
    } else {
        audio_io::compute_vad(&buffer, cfg)
    };
    Ok(Prepared {
        buffer,
        vad,
        time_map,
        original_duration_s,
    })
}

/// Everything produced by one detection run, for callers that want more
/// than the report (feature dumps, benchmarks).
#[derive(Debug, Clone)]
pub struct Detection {
    pub report: EventReport,
    pub candidates: Candidates,
    pub features: Option<FeatureSet>,
    pub prepared: Prepared,
}

pub fn run(
    buf: &AudioBuffer,
    alignment: Option<&WordAlignment>,
    cfg: &RuleConfig,
    recording_id: &str,
) -> Result<Detection> {
    cfg.validate()?;
    let prepared = prepare(buf, cfg)?;
    if framing::frame_count(prepared.buffer.len()) == 0 || prepared.vad.speech_frames() == 0 {
        log::info!("{recording_id}: no speech found");
        let report = EventReport::new(
            recording_id,
            Vec::new(),
            cfg.fallback_speaking_rate,
            false,
            prepared.original_duration_s,
            cfg,
        );
        return Ok(Detection {
            report,
            candidates: Candidates::default(),
            features: None,
            prepared,
        });
    }
    let fs = features::extract(&prepared.buffer, &prepared.vad, cfg)?;
    let local_alignment = alignment.map(|a| to_trimmed(a, &prepared.time_map));
    let candidates = detect_all(&fs, &prepared.vad, local_alignment.as_ref(), cfg);
    let map = &prepared.time_map;
    let events = resolve(candidates.clone().into_vec(), cfg)
        .into_iter()
        .map(|e| e.remap(|t| map.to_original(t)))
        .collect();
    let report = EventReport::new(
        recording_id,
        events,
        fs.speaking_rate,
        fs.rate_estimated,
        prepared.original_duration_s,
        cfg,
    );
    Ok(Detection {
        report,
        candidates,
        features: Some(fs),
        prepared,
    })
}

/// Move alignment times onto the trimmed timeline. Tokens that collapse
/// into a removed stretch are dropped.
fn to_trimmed(align: &WordAlignment, map: &TimeMap) -> WordAlignment {
    if map.is_identity() {
        return align.clone();
    }
    let tokens = align
        .tokens
        .iter()
        .filter_map(|t| {
            let (s, e) = (map.to_trimmed(t.start_s), map.to_trimmed(t.end_s));
            (e > s).then(|| WordToken {
                word: t.word.clone(),
                start_s: s,
                end_s: e,
            })
        })
        .collect();
    WordAlignment { tokens }
}

pub fn detect(
    buf: &AudioBuffer,
    alignment: Option<&WordAlignment>,
    cfg: &RuleConfig,
    recording_id: &str,
) -> Result<EventReport> {
    run(buf, alignment, cfg, recording_id).map(|d| d.report)
}

/// Detect on a WAV file; the recording id is the file stem.
pub fn detect_file(
    path: impl AsRef<Path>,
    alignment: Option<&WordAlignment>,
    cfg: &RuleConfig,
) -> Result<EventReport> {
    let path = path.as_ref();
    let buf = audio_io::load_audio(path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    detect(&buf, alignment, cfg, &id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::{harmonic, silence};

    #[test]
    fn silent_input_gives_empty_report() {
        let buf = AudioBuffer::new(silence(1.0), 16_000);
        let r = detect(&buf, None, &RuleConfig::default(), "s").unwrap();
        assert!(r.events.is_empty());
        assert!((r.duration_s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn trimming_is_undone_in_event_times() {
        // 3 s of leading silence gets trimmed; the event must land back near 3.2 s
        let mut x = silence(3.0);
        for f in [130.0, 190.0] {
            x.extend(harmonic(f, 0.15, 0.3));
            x.extend(silence(0.05));
        }
        x.extend(harmonic(150.0, 0.8, 0.3));
        x.extend(silence(0.5));
        let buf = AudioBuffer::new(x, 16_000);
        let d = run(&buf, None, &RuleConfig::default(), "t").unwrap();
        assert!(!d.prepared.time_map.is_identity());
        let prol: Vec<_> = d
            .report
            .events
            .iter()
            .filter(|e| e.kind == crate::Kind::Prolongation)
            .collect();
        assert!(!prol.is_empty(), "{:?}", d.report.events);
        assert!(
            prol[0].start_s > 3.3 && prol[0].start_s < 3.5,
            "{:?}",
            prol[0]
        );
    }

    #[test]
    fn invalid_config_rejected() {
        let buf = AudioBuffer::new(harmonic(150.0, 1.0, 0.3), 16_000);
        let cfg = RuleConfig {
            theta_sim: 1.5,
            ..RuleConfig::default()
        };
        assert!(detect(&buf, None, &cfg, "x").is_err());
    }
}
