//! Sound repetitions: quasi-periodic re-articulation inside a short window,
//! found by comparing window halves with DTW, plus the multi-feature
//! autocorrelation score used to grade them.

use serde::{Deserialize, Serialize};

use super::dtw::segment_cost;
use super::{DysfluencyEvent, Evidence, Kind};
use crate::config::RuleConfig;
use crate::error::{Error, Result};
use crate::features::dsp::autocorrelation;
use crate::features::FeatureSet;
use crate::framing::{self, frames_to_span, HOP_S};

/// Length of the analysis window for the repetition score.
pub const SCORE_WINDOW_S: f64 = 0.5;
const CYCLE_PEAK_MIN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepetitionScore {
    pub score: f64,
    /// Lag that maximizes the weighted ACF, in seconds.
    pub lag_s: f64,
}

/// Repetition cycles found in an energy track.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cycles {
    /// One for the window itself plus each qualifying ACF peak.
    pub count: usize,
    /// Lag of the first qualifying peak, in frames.
    pub period_frames: Option<usize>,
}

/// Local maxima of the normalized energy autocorrelation at or above 0.5.
/// A window whose energy varies by less than `cycle_min_depth_db` has no
/// cycles at all.
pub fn cycles(energy_db: &[f64], cfg: &RuleConfig) -> Cycles {
    let none = Cycles {
        count: 0,
        period_frames: None,
    };
    let (lo, hi) = energy_db
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    if energy_db.len() < 4 || hi - lo < cfg.cycle_min_depth_db {
        return none;
    }
    let Some(r) = autocorrelation(energy_db, energy_db.len() - 1) else {
        return none;
    };
    let peaks: Vec<usize> = (1..r.len() - 1)
        .filter(|&l| r[l] >= CYCLE_PEAK_MIN && r[l] > r[l - 1] && r[l] >= r[l + 1])
        .collect();
    Cycles {
        count: 1 + peaks.len(),
        period_frames: peaks.first().copied(),
    }
}

pub fn count_cycles(energy_db: &[f64], cfg: &RuleConfig) -> usize {
    cycles(energy_db, cfg).count
}

/// Weighted sum over energy, flux and centroid of the peak autocorrelation
/// within the configured lag range, on a 500 ms window centered at `t`.
/// Near the edges the window is shifted inward to fit.
pub fn repetition_score(fs: &FeatureSet, t: f64, cfg: &RuleConfig) -> Result<RepetitionScore> {
    if !(0.0..=fs.duration_s).contains(&t) {
        return Err(Error::OutOfRange {
            t,
            duration: fs.duration_s,
        });
    }
    let n = fs.frames();
    let width = ((SCORE_WINDOW_S / HOP_S).round() as usize).min(n);
    let center = framing::time_to_frame(t, n);
    let start = center.saturating_sub(width / 2).min(n - width);
    let range = start..start + width;

    let lag_min = (cfg.acf_lag_min_s / HOP_S).round() as usize;
    let lag_max = (cfg.acf_lag_max_s / HOP_S).round() as usize;
    let tracks = [
        &fs.energy.values[range.clone()],
        &fs.flux.values[range.clone()],
        &fs.centroid.values[range],
    ];
    let mut score = 0.0;
    let mut combined = vec![0.0; lag_max + 1];
    for (w, x) in cfg.acf_weights().into_iter().zip(tracks) {
        let Some(acf) = autocorrelation(x, lag_max) else {
            continue;
        };
        let top = acf
            .iter()
            .skip(lag_min)
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if top.is_finite() {
            score += w * top.max(0.0);
        }
        for (c, a) in combined.iter_mut().zip(&acf) {
            *c += w * a;
        }
    }
    let best_lag = (lag_min..combined.len())
        .max_by(|a, b| combined[*a].total_cmp(&combined[*b]).then(b.cmp(a)))
        .unwrap_or(lag_min);
    Ok(RepetitionScore {
        score,
        lag_s: best_lag as f64 * HOP_S,
    })
}

/// Windows of `dtw_window_frames` whose halves align below `theta_dtw` and
/// whose energy shows at least `min_cycles` cycles. Overlapping windows are
/// settled by lowest cost (ties to the earlier), so raising `theta_dtw`
/// only ever adds events.
pub fn detect_sound_repetitions(fs: &FeatureSet, cfg: &RuleConfig) -> Vec<DysfluencyEvent> {
    let w = cfg.dtw_window_frames;
    let half = w / 2;
    let n = fs.frames();
    let max_period_s = cfg.max_cycle_period_syll / fs.speaking_rate;
    let mut passing: Vec<(f64, usize, Cycles)> = Vec::new();
    for i in 0..(n + 1).saturating_sub(w) {
        let c = cycles(&fs.energy.values[i..i + w], cfg);
        if c.count < cfg.min_cycles {
            continue;
        }
        // with min_cycles >= 2 a period always exists here
        let period_s = c.period_frames.map_or(0.0, |p| p as f64 * HOP_S);
        if period_s > max_period_s {
            continue;
        }
        let dtw_cost = segment_cost(fs, i..i + half, i + half..i + w);
        if dtw_cost < cfg.theta_dtw {
            passing.push((dtw_cost, i, c));
        }
    }
    passing.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut chosen: Vec<(f64, usize, Cycles)> = Vec::new();
    for p in passing {
        if chosen.iter().all(|c| c.1.abs_diff(p.1) >= w) {
            chosen.push(p);
        }
    }
    chosen.sort_by_key(|c| c.1);
    chosen
        .into_iter()
        .map(|(dtw_cost, i, c)| {
            let (start_s, end_s) = frames_to_span(i, i + w - 1);
            let center = (0.5 * (start_s + end_s)).clamp(0.0, fs.duration_s);
            let r = repetition_score(fs, center, cfg).unwrap_or(RepetitionScore {
                score: 0.0,
                lag_s: 0.0,
            });
            DysfluencyEvent {
                kind: Kind::SoundRep,
                start_s,
                end_s,
                confidence: (r.score / cfg.theta_r - 0.5).clamp(0.0, 1.0),
                evidence: Evidence::SoundRepetition {
                    dtw_cost,
                    cycle_count: c.count,
                    cycle_period_s: c.period_frames.map_or(0.0, |p| p as f64 * HOP_S),
                    speaking_rate: fs.speaking_rate,
                    repetition_score: r.score,
                    acf_lag_s: r.lag_s,
                },
            }
        })
        .collect()
}
