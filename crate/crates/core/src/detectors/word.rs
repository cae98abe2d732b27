//! Word repetitions from a word alignment, confirmed acoustically.

use super::alignment::{WordAlignment, WordToken};
use super::dtw::segment_cost;
use super::{DysfluencyEvent, Evidence, Kind};
use crate::config::RuleConfig;
use crate::features::FeatureSet;

/// Frames whose centers fall inside the token interval.
fn frames_of(fs: &FeatureSet, tok: &WordToken) -> std::ops::Range<usize> {
    let series = &fs.mfcc;
    let first = ((tok.start_s - series.start_s) / series.hop_s)
        .ceil()
        .max(0.0) as usize;
    let last = ((tok.end_s - series.start_s) / series.hop_s).floor();
    let end = if last < 0.0 {
        0
    } else {
        (last as usize + 1).min(fs.frames())
    };
    first.min(end)..end
}

pub fn detect_word_repetitions(
    fs: &FeatureSet,
    align: &WordAlignment,
    cfg: &RuleConfig,
) -> Vec<DysfluencyEvent> {
    let mut events = Vec::new();
    for pair in align.tokens.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let onset_gap_s = b.start_s - a.start_s;
        if a.word != b.word || onset_gap_s > cfg.word_window_s {
            continue;
        }
        let (fa, fb) = (frames_of(fs, a), frames_of(fs, b));
        if fa.is_empty() || fb.is_empty() {
            log::debug!(
                "word `{}` at {:.2}s has no frames; skipped",
                a.word,
                a.start_s
            );
            continue;
        }
        let dtw_cost = segment_cost(fs, fa, fb);
        if dtw_cost >= cfg.theta_word_dtw {
            continue;
        }
        events.push(DysfluencyEvent {
            kind: Kind::WordRep,
            start_s: a.start_s,
            end_s: b.end_s,
            confidence: (0.5 + 0.5 * (1.0 - dtw_cost / cfg.theta_word_dtw)).clamp(0.0, 1.0),
            evidence: Evidence::WordRepetition {
                matched_word: a.word.clone(),
                dtw_cost,
                onset_gap_s,
            },
        });
    }
    events
}
