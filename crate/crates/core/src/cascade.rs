//! Conflict resolution between detectors.
//!
//! Same-kind events closer than `min_separation_s` are merged. Events of
//! different kinds that overlap by at least `overlap_gate` of the shorter
//! one are settled by clinical precedence (block, sound repetition,
//! prolongation, word repetition); smaller overlaps may co-occur.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::RuleConfig;
use crate::detectors::{DysfluencyEvent, Kind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub recording_id: String,
    pub speaking_rate: f64,
    /// False when the rate is the configured fallback.
    pub rate_estimated: bool,
    pub duration_s: f64,
    pub events: Vec<DysfluencyEvent>,
    pub counts: BTreeMap<Kind, usize>,
    pub config_snapshot: RuleConfig,
}

impl EventReport {
    pub fn new(
        recording_id: impl Into<String>,
        events: Vec<DysfluencyEvent>,
        speaking_rate: f64,
        rate_estimated: bool,
        duration_s: f64,
        cfg: &RuleConfig,
    ) -> Self {
        let counts = Kind::ALL
            .iter()
            .map(|k| (*k, events.iter().filter(|e| e.kind == *k).count()))
            .collect();
        Self {
            recording_id: recording_id.into(),
            speaking_rate,
            rate_estimated,
            duration_s,
            events,
            counts,
            config_snapshot: cfg.clone(),
        }
    }

    /// Check the ordering, separation and overlap guarantees of `resolve`.
    pub fn check_invariants(&self) -> Result<(), String> {
        check_invariants(&self.events, &self.config_snapshot)
    }
}

pub fn check_invariants(events: &[DysfluencyEvent], cfg: &RuleConfig) -> Result<(), String> {
    for w in events.windows(2) {
        if w[1].start_s < w[0].start_s {
            return Err(format!("unsorted at {:?}", w[1]));
        }
    }
    for (i, a) in events.iter().enumerate() {
        if !a.is_valid() {
            return Err(format!("invalid event {a:?}"));
        }
        for b in &events[i + 1..] {
            if a.kind == b.kind {
                let gap = if a.start_s <= b.start_s {
                    b.start_s - a.end_s
                } else {
                    a.start_s - b.end_s
                };
                if gap < cfg.min_separation_s {
                    return Err(format!("{} events {a:?} and {b:?} too close", a.kind));
                }
            } else if blocks(a, b, cfg) {
                return Err(format!("overlap above gate: {a:?} / {b:?}"));
            }
        }
    }
    Ok(())
}

/// Does the overlap of `a` and `b` reach the gate fraction of the shorter?
fn blocks(a: &DysfluencyEvent, b: &DysfluencyEvent, cfg: &RuleConfig) -> bool {
    let shorter = a.duration_s().min(b.duration_s());
    a.overlap_s(b) >= cfg.overlap_gate * shorter
}

fn merge_same_kind(mut events: Vec<DysfluencyEvent>, min_sep: f64) -> Vec<DysfluencyEvent> {
    events.sort_by(|a, b| {
        a.start_s
            .total_cmp(&b.start_s)
            .then(a.end_s.total_cmp(&b.end_s))
    });
    let mut out: Vec<DysfluencyEvent> = Vec::with_capacity(events.len());
    for e in events {
        match out.last_mut() {
            Some(cur) if e.start_s - cur.end_s < min_sep => {
                cur.end_s = cur.end_s.max(e.end_s);
                if e.confidence > cur.confidence {
                    cur.confidence = e.confidence;
                    cur.evidence = e.evidence;
                }
            }
            _ => out.push(e),
        }
    }
    out
}

pub fn resolve(candidates: Vec<DysfluencyEvent>, cfg: &RuleConfig) -> Vec<DysfluencyEvent> {
    let mut by_kind: BTreeMap<Kind, Vec<DysfluencyEvent>> = BTreeMap::new();
    for e in candidates {
        by_kind.entry(e.kind).or_default().push(e);
    }
    let mut merged: Vec<DysfluencyEvent> = by_kind
        .into_values()
        .flat_map(|v| merge_same_kind(v, cfg.min_separation_s))
        .collect();
    merged.sort_by(|a, b| {
        b.kind
            .precedence()
            .cmp(&a.kind.precedence())
            .then(a.start_s.total_cmp(&b.start_s))
    });
    let mut accepted: Vec<DysfluencyEvent> = Vec::with_capacity(merged.len());
    for e in merged {
        if accepted
            .iter()
            .all(|k| k.kind == e.kind || !blocks(k, &e, cfg))
        {
            accepted.push(e);
        }
    }
    accepted.sort_by(|a, b| {
        a.start_s
            .total_cmp(&b.start_s)
            .then(a.end_s.total_cmp(&b.end_s))
            .then(a.kind.cmp(&b.kind))
    });
    accepted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::Evidence;
    use proptest::prelude::*;

    fn evidence(kind: Kind) -> Evidence {
        match kind {
            Kind::Prolongation => Evidence::Prolongation {
                mean_sim: 0.95,
                min_sim: 0.93,
                max_f0_delta_hz: 0.0,
                min_hnr_db: 20.0,
                duration_s: 0.5,
                speaking_rate: 3.0,
                t_min_s: 0.4,
                normalized_duration: 1.5,
            },
            Kind::SoundRep => Evidence::SoundRepetition {
                dtw_cost: 0.1,
                cycle_count: 3,
                cycle_period_s: 0.1,
                speaking_rate: 3.0,
                repetition_score: 0.7,
                acf_lag_s: 0.12,
            },
            Kind::WordRep => Evidence::WordRepetition {
                matched_word: "the".into(),
                dtw_cost: 0.1,
                onset_gap_s: 0.3,
            },
            Kind::Block => Evidence::SilentBlock {
                silence_s: 0.4,
                preceding_flux: 0.9,
                flux_threshold: 0.5,
            },
        }
    }

    fn ev(kind: Kind, start_s: f64, end_s: f64, confidence: f64) -> DysfluencyEvent {
        DysfluencyEvent {
            kind,
            start_s,
            end_s,
            confidence,
            evidence: evidence(kind),
        }
    }

    #[test]
    fn block_beats_prolongation() {
        let cfg = RuleConfig::default();
        let out = resolve(
            vec![
                ev(Kind::Prolongation, 2.1, 2.4, 0.9),
                ev(Kind::Block, 2.0, 2.5, 0.6),
            ],
            &cfg,
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].kind, Kind::Block);
    }

    #[test]
    fn close_same_kind_merge() {
        let cfg = RuleConfig::default();
        let out = resolve(
            vec![
                ev(Kind::Prolongation, 1.0, 1.4, 0.6),
                ev(Kind::Prolongation, 1.45, 1.8, 0.8),
            ],
            &cfg,
        );
        assert_eq!(out.len(), 1);
        assert_eq!((out[0].start_s, out[0].end_s), (1.0, 1.8));
        assert_eq!(out[0].confidence, 0.8);
    }

    #[test]
    fn single_event_unchanged() {
        let cfg = RuleConfig::default();
        for k in Kind::ALL {
            let e = ev(k, 1.0, 1.3, 0.5);
            assert_eq!(resolve(vec![e.clone()], &cfg), vec![e]);
        }
    }

    #[test]
    fn small_overlap_coexists() {
        let cfg = RuleConfig::default();
        let out = resolve(
            vec![
                ev(Kind::Prolongation, 1.0, 2.0, 0.5),
                ev(Kind::WordRep, 1.95, 3.0, 0.5),
            ],
            &cfg,
        );
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn precedence_over_all_pairs() {
        let cfg = RuleConfig::default();
        for a in Kind::ALL {
            for b in Kind::ALL {
                if a == b {
                    continue;
                }
                let out = resolve(vec![ev(a, 1.0, 2.0, 0.5), ev(b, 1.0, 2.0, 0.5)], &cfg);
                let winner = if a.precedence() > b.precedence() {
                    a
                } else {
                    b
                };
                assert_eq!(out.len(), 1);
                assert_eq!(out[0].kind, winner, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn counts_in_report() {
        let cfg = RuleConfig::default();
        let events = resolve(
            vec![
                ev(Kind::Block, 0.0, 0.5, 0.5),
                ev(Kind::WordRep, 3.0, 3.5, 0.5),
            ],
            &cfg,
        );
        let r = EventReport::new("r", events, 3.0, true, 5.0, &cfg);
        assert_eq!(r.counts[&Kind::Block], 1);
        assert_eq!(r.counts[&Kind::SoundRep], 0);
        r.check_invariants().unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["counts"]["word_rep"], 1);
    }

    fn soup() -> impl Strategy<Value = Vec<DysfluencyEvent>> {
        prop::collection::vec((0usize..4, 0.0f64..10.0, 0.01f64..2.0, 0.0f64..=1.0), 0..25)
            .prop_map(|v| {
                v.into_iter()
                    .map(|(k, s, d, c)| ev(Kind::ALL[k], s, s + d, c))
                    .collect()
            })
    }

    proptest! {
        #[test]
        fn resolve_invariants_and_idempotence(cands in soup()) {
            let cfg = RuleConfig::default();
            let once = resolve(cands, &cfg);
            prop_assert!(check_invariants(&once, &cfg).is_ok(), "{:?}", check_invariants(&once, &cfg));
            let twice = resolve(once.clone(), &cfg);
            prop_assert_eq!(once, twice);
        }
    }
}
