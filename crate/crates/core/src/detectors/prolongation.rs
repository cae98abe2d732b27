//! Prolongations: runs of spectrally stationary, steadily voiced frames that
//! last longer than a rate-normalized minimum.

use super::{DysfluencyEvent, Evidence, Kind};
use crate::config::RuleConfig;
use crate::features::dsp::pearson;
use crate::features::mfcc::shape;
use crate::features::FeatureSet;
use crate::framing::{frames_extent, HOP_S};

/// Per-pair measurements for frames (i, i+1).
#[derive(Debug, Clone, Copy)]
struct Pair {
    sim: f64,
    /// `None` when either frame is unvoiced.
    f0_delta: Option<f64>,
    hnr: f64,
}

fn pair(fs: &FeatureSet, i: usize) -> Pair {
    let (a, b) = (fs.f0.values[i], fs.f0.values[i + 1]);
    Pair {
        sim: pearson(shape(&fs.mfcc.values[i]), shape(&fs.mfcc.values[i + 1])),
        f0_delta: (a > 0.0 && b > 0.0).then(|| (b - a).abs()),
        hnr: fs.hnr.values[i],
    }
}

fn passes(p: &Pair, cfg: &RuleConfig) -> bool {
    p.sim > cfg.theta_sim
        && (!cfg.f0_gate_enabled || p.f0_delta.is_none_or(|d| d < cfg.theta_f0))
        && (!cfg.hnr_gate_enabled || p.hnr > cfg.theta_hnr)
}

/// Frame-to-frame similarity of the MFCC shape (c1..c12).
pub fn frame_similarity(fs: &FeatureSet) -> Vec<f64> {
    (0..fs.frames().saturating_sub(1))
        .map(|i| pair(fs, i).sim)
        .collect()
}

pub fn detect_prolongations(fs: &FeatureSet, cfg: &RuleConfig) -> Vec<DysfluencyEvent> {
    let n = fs.frames();
    let pairs: Vec<Pair> = (0..n.saturating_sub(1)).map(|i| pair(fs, i)).collect();
    let rate = fs.speaking_rate;
    let t_min = cfg.t_min(rate);
    let mut events = Vec::new();
    let mut i = 0;
    while i < pairs.len() {
        if !passes(&pairs[i], cfg) {
            i += 1;
            continue;
        }
        let p = i;
        while i < pairs.len() && passes(&pairs[i], cfg) {
            i += 1;
        }
        let run = &pairs[p..i];
        // pairs p..i-1 cover frames p..=i. Each edge of the stationary
        // stretch lies between the windows of the first frame in and the
        // last frame out, so it is placed half a hop outside the run.
        let (a, b) = frames_extent(p, i);
        let start_s = (a - HOP_S / 2.0).max(0.0);
        let end_s = (b + HOP_S / 2.0).min(fs.duration_s);
        let duration_s = end_s - start_s;
        if duration_s <= t_min {
            continue;
        }
        let mean_sim = run.iter().map(|x| x.sim).sum::<f64>() / run.len() as f64;
        let min_sim = run.iter().map(|x| x.sim).fold(f64::INFINITY, f64::min);
        let max_f0_delta_hz = run.iter().filter_map(|x| x.f0_delta).fold(0.0, f64::max);
        let min_hnr_db = run.iter().map(|x| x.hnr).fold(f64::INFINITY, f64::min);
        let normalized_duration = duration_s * rate;
        let sim_margin = (mean_sim - cfg.theta_sim) / (1.0 - cfg.theta_sim);
        let dur_margin = ((normalized_duration - cfg.alpha) / cfg.alpha).min(1.0);
        let confidence = (0.5 * sim_margin + 0.5 * dur_margin).clamp(0.0, 1.0);
        events.push(DysfluencyEvent {
            kind: Kind::Prolongation,
            start_s,
            end_s,
            confidence,
            evidence: Evidence::Prolongation {
                mean_sim,
                min_sim,
                max_f0_delta_hz,
                min_hnr_db,
                duration_s,
                speaking_rate: rate,
                t_min_s: t_min,
                normalized_duration,
            },
        });
    }
    events
}
