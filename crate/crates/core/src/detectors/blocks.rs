//! Blocks, silent and audible.
//!
//! A silent block is an internal pause longer than `block_silence_s` that
//! starts right after a broadband transient (a spectral-flux spike, standing
//! in for an articulation cut off mid-phoneme). An audible block is a
//! stretch of speech that is very quiet relative to the utterance yet has a
//! high spectral centroid, as with tense, breathy phonation.

use super::{DysfluencyEvent, Evidence, Kind};
use crate::audio_io::{percentile, VadMask};
use crate::config::RuleConfig;
use crate::features::FeatureSet;
use crate::framing::{frames_extent, frames_to_span, HOP_S};

/// Maximal runs of `true`, as inclusive index pairs.
fn runs(mask: impl Iterator<Item = bool>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    let mut len = 0;
    for (i, m) in mask.enumerate() {
        len = i + 1;
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, len - 1));
    }
    out
}

fn silent_blocks(fs: &FeatureSet, vad: &VadMask, cfg: &RuleConfig) -> Vec<DysfluencyEvent> {
    let n = vad.len().min(fs.frames());
    let Some(flux_threshold) = percentile(&fs.flux.values, cfg.flux_spike_percentile) else {
        return Vec::new();
    };
    let lookback = (cfg.block_preflux_s / HOP_S).round() as usize;
    let mut out = Vec::new();
    for (a, b) in runs(vad.speech[..n].iter().map(|s| !s)) {
        // internal only: speech on both sides
        if a == 0 || b + 1 >= n {
            continue;
        }
        let (start_s, end_s) = frames_extent(a, b);
        let silence_s = end_s - start_s;
        if silence_s <= cfg.block_silence_s {
            continue;
        }
        let preceding_flux = fs.flux.values[a.saturating_sub(lookback)..a]
            .iter()
            .copied()
            .fold(0.0, f64::max);
        if preceding_flux <= flux_threshold {
            continue;
        }
        let over = (silence_s - cfg.block_silence_s) / cfg.block_silence_s;
        let spike = (preceding_flux - flux_threshold) / (1.0 - flux_threshold).max(1e-9);
        out.push(DysfluencyEvent {
            kind: Kind::Block,
            start_s,
            end_s,
            confidence: (0.5 + 0.25 * over.min(1.0) + 0.25 * spike.min(1.0)).clamp(0.0, 1.0),
            evidence: Evidence::SilentBlock {
                silence_s,
                preceding_flux,
                flux_threshold,
            },
        });
    }
    out
}

fn audible_blocks(fs: &FeatureSet, vad: &VadMask, cfg: &RuleConfig) -> Vec<DysfluencyEvent> {
    let n = vad.len().min(fs.frames());
    let speech_energy: Vec<f64> = (0..n)
        .filter(|&i| vad.speech[i])
        .map(|i| fs.energy.values[i])
        .collect();
    let Some(median) = percentile(&speech_energy, 50.0) else {
        return Vec::new();
    };
    let rel = |i: usize| fs.energy.values[i] - median;
    let candidate = (0..n).map(|i| {
        vad.speech[i]
            && rel(i) <= cfg.audible_block_rms_db
            && fs.centroid.values[i] >= cfg.audible_block_centroid_hz
    });
    let mut out = Vec::new();
    for (a, b) in runs(candidate) {
        let (start_s, end_s) = frames_to_span(a, b);
        let duration_s = end_s - start_s;
        if duration_s < cfg.audible_block_min_s {
            continue;
        }
        let rms_rel_db = (a..=b).map(rel).fold(f64::NEG_INFINITY, f64::max);
        let centroid_hz = (a..=b)
            .map(|i| fs.centroid.values[i])
            .fold(f64::INFINITY, f64::min);
        let depth = (cfg.audible_block_rms_db - rms_rel_db) / cfg.audible_block_rms_db.abs();
        let length = (duration_s - cfg.audible_block_min_s) / cfg.audible_block_min_s;
        out.push(DysfluencyEvent {
            kind: Kind::Block,
            start_s,
            end_s,
            confidence: (0.5 + 0.25 * depth.min(1.0) + 0.25 * length.min(1.0)).clamp(0.0, 1.0),
            evidence: Evidence::AudibleBlock {
                duration_s,
                rms_rel_db,
                centroid_hz,
            },
        });
    }
    out
}

pub fn detect_blocks(fs: &FeatureSet, vad: &VadMask, cfg: &RuleConfig) -> Vec<DysfluencyEvent> {
    let mut out = silent_blocks(fs, vad, cfg);
    out.extend(audible_blocks(fs, vad, cfg));
    out.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    out
}
