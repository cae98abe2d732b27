//! Event-level scoring of detections against reference annotations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RuleConfig;
use crate::detectors::{DysfluencyEvent, Kind};
use crate::error::{Error, Result};
use crate::pipeline;
use crate::synthgen::{self, SynthSpec};

pub const DEFAULT_IOU: f64 = 0.5;
pub const CLIP_S: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub kind: Kind,
    pub start_s: f64,
    pub end_s: f64,
}

impl Annotation {
    pub fn iou(&self, other: &Annotation) -> f64 {
        let inter = (self.end_s.min(other.end_s) - self.start_s.max(other.start_s)).max(0.0);
        let union = (self.end_s - self.start_s) + (other.end_s - other.start_s) - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

impl From<&DysfluencyEvent> for Annotation {
    fn from(e: &DysfluencyEvent) -> Self {
        Self {
            kind: e.kind,
            start_s: e.start_s,
            end_s: e.end_s,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub recording_id: String,
    pub events: Vec<Annotation>,
}

impl AnnotationSet {
    pub fn new(recording_id: impl Into<String>, events: Vec<Annotation>) -> Result<Self> {
        for e in &events {
            if !(e.start_s.is_finite() && e.end_s.is_finite() && e.start_s < e.end_s) {
                return Err(Error::InvalidArgument(format!(
                    "annotation {} [{}, {}] is not a valid interval",
                    e.kind, e.start_s, e.end_s
                )));
            }
        }
        Ok(Self {
            recording_id: recording_id.into(),
            events,
        })
    }

    pub fn from_events(recording_id: impl Into<String>, events: &[DysfluencyEvent]) -> Self {
        Self {
            recording_id: recording_id.into(),
            events: events.iter().map(Annotation::from).collect(),
        }
    }

    /// Parse `recording_id,kind,start_s,end_s` rows into one set per
    /// recording, in order of first appearance. A header row is optional.
    pub fn parse_csv(text: &str) -> Result<Vec<AnnotationSet>> {
        let mut sets: Vec<AnnotationSet> = Vec::new();
        let mut first = true;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let is_first = std::mem::replace(&mut first, false);
            let err = |message: String| Error::Parse {
                line: lineno + 1,
                message,
            };
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(err(format!(
                    "expected recording_id,kind,start_s,end_s; got {} columns",
                    cols.len()
                )));
            }
            if is_first && cols[2].parse::<f64>().is_err() {
                continue;
            }
            let kind: Kind = cols[1].parse().map_err(err)?;
            let start_s: f64 = cols[2]
                .parse()
                .map_err(|_| err(format!("bad start time `{}`", cols[2])))?;
            let end_s: f64 = cols[3]
                .parse()
                .map_err(|_| err(format!("bad end time `{}`", cols[3])))?;
            if !(start_s.is_finite() && end_s.is_finite() && start_s < end_s) {
                return Err(err(format!(
                    "interval [{start_s}, {end_s}] is empty or reversed"
                )));
            }
            let ann = Annotation {
                kind,
                start_s,
                end_s,
            };
            match sets.iter_mut().find(|s| s.recording_id == cols[0]) {
                Some(s) => s.events.push(ann),
                None => sets.push(AnnotationSet {
                    recording_id: cols[0].to_string(),
                    events: vec![ann],
                }),
            }
        }
        Ok(sets)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<AnnotationSet>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("recording_id,kind,start_s,end_s\n");
        self.append_csv_rows(&mut out);
        out
    }

    pub fn append_csv_rows(&self, out: &mut String) {
        for e in &self.events {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6}",
                self.recording_id, e.kind, e.start_s, e.end_s
            );
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn add(&mut self, o: &Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub recording_id: String,
    pub kind: Kind,
    pub ref_index: usize,
    pub hyp_index: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Event,
    Clip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: MatchMode,
    /// Minimum IoU in event mode, clip length in seconds in clip mode.
    pub parameter: f64,
    pub per_kind: BTreeMap<Kind, Counts>,
    pub matches: Vec<Match>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl From<Counts> for Prf {
    fn from(c: Counts) -> Self {
        Self {
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
        }
    }
}

impl EvalReport {
    pub fn empty(mode: MatchMode, parameter: f64) -> Self {
        Self {
            mode,
            parameter,
            per_kind: Kind::ALL.iter().map(|k| (*k, Counts::default())).collect(),
            matches: Vec::new(),
        }
    }

    /// Micro-average over kinds.
    pub fn overall(&self) -> Counts {
        let mut c = Counts::default();
        for k in self.per_kind.values() {
            c.add(k);
        }
        c
    }

    pub fn kind(&self, k: Kind) -> Counts {
        self.per_kind.get(&k).copied().unwrap_or_default()
    }

    /// Pool another recording's counts and matches into this report.
    pub fn absorb(&mut self, other: EvalReport) {
        for (k, c) in other.per_kind {
            self.per_kind.entry(k).or_default().add(&c);
        }
        self.matches.extend(other.matches);
    }

    pub fn summary(&self) -> BTreeMap<String, Prf> {
        let mut out: BTreeMap<String, Prf> = self
            .per_kind
            .iter()
            .map(|(k, c)| (k.to_string(), (*c).into()))
            .collect();
        out.insert("overall".into(), self.overall().into());
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,tp,fp,fn,precision,recall,f1\n");
        let rows = self
            .per_kind
            .iter()
            .map(|(k, c)| (k.to_string(), *c))
            .chain([("overall".to_string(), self.overall())]);
        for (name, c) in rows {
            let _ = writeln!(
                out,
                "{name},{},{},{},{:.4},{:.4},{:.4}",
                c.tp,
                c.fp,
                c.fn_,
                c.precision(),
                c.recall(),
                c.f1()
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = match self.mode {
            MatchMode::Event => format!("event matching, IoU >= {}\n", self.parameter),
            MatchMode::Clip => format!("clip matching, {} s clips\n", self.parameter),
        };
        let _ = writeln!(
            out,
            "{:<14}{:>6}{:>6}{:>6}{:>11}{:>9}{:>8}",
            "kind", "tp", "fp", "fn", "precision", "recall", "f1"
        );
        let rows = self
            .per_kind
            .iter()
            .map(|(k, c)| (k.to_string(), *c))
            .chain([("overall".to_string(), self.overall())]);
        for (name, c) in rows {
            let _ = writeln!(
                out,
                "{name:<14}{:>6}{:>6}{:>6}{:>11.3}{:>9.3}{:>8.3}",
                c.tp,
                c.fp,
                c.fn_,
                c.precision(),
                c.recall(),
                c.f1()
            );
        }
        out
    }
}

/// Greedy one-to-one matching by descending IoU. Returns `(ref, hyp, iou)`.
pub fn greedy_match(
    hyp: &[Annotation],
    reference: &[Annotation],
    iou_min: f64,
) -> Vec<(usize, usize, f64)> {
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for (r, re) in reference.iter().enumerate() {
        for (h, he) in hyp.iter().enumerate() {
            if re.kind == he.kind {
                let iou = re.iou(he);
                if iou >= iou_min {
                    pairs.push((r, h, iou));
                }
            }
        }
    }
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut used_r = vec![false; reference.len()];
    let mut used_h = vec![false; hyp.len()];
    let mut out = Vec::new();
    for (r, h, iou) in pairs {
        if !used_r[r] && !used_h[h] {
            used_r[r] = true;
            used_h[h] = true;
            out.push((r, h, iou));
        }
    }
    out.sort_by_key(|m| (m.0, m.1));
    out
}

pub fn score(hyp: &AnnotationSet, reference: &AnnotationSet, iou_min: f64) -> Result<EvalReport> {
    if hyp.recording_id != reference.recording_id {
        return Err(Error::RecordingMismatch {
            hyp: hyp.recording_id.clone(),
            reference: reference.recording_id.clone(),
        });
    }
    let matched = greedy_match(&hyp.events, &reference.events, iou_min);
    let mut report = EvalReport::empty(MatchMode::Event, iou_min);
    for &(r, h, iou) in &matched {
        let kind = reference.events[r].kind;
        report.per_kind.entry(kind).or_default().tp += 1;
        report.matches.push(Match {
            recording_id: reference.recording_id.clone(),
            kind,
            ref_index: r,
            hyp_index: h,
            iou,
        });
    }
    for k in Kind::ALL {
        let tp = report.kind(k).tp;
        let n_ref = reference.events.iter().filter(|e| e.kind == k).count();
        let n_hyp = hyp.events.iter().filter(|e| e.kind == k).count();
        let c = report.per_kind.entry(k).or_default();
        c.fn_ = n_ref - tp;
        c.fp = n_hyp - tp;
    }
    Ok(report)
}

/// Binary per-clip scoring: a clip is positive for a kind when any event of
/// that kind intersects it.
pub fn score_clips(
    hyp: &AnnotationSet,
    reference: &AnnotationSet,
    duration_s: f64,
    clip_s: f64,
) -> Result<EvalReport> {
    if hyp.recording_id != reference.recording_id {
        return Err(Error::RecordingMismatch {
            hyp: hyp.recording_id.clone(),
            reference: reference.recording_id.clone(),
        });
    }
    if clip_s <= 0.0 {
        return Err(Error::InvalidArgument(
            "clip length must be positive".into(),
        ));
    }
    let clips = (duration_s / clip_s).ceil().max(1.0) as usize;
    let positive = |set: &AnnotationSet, k: Kind, c: usize| {
        let (a, b) = (c as f64 * clip_s, (c + 1) as f64 * clip_s);
        set.events
            .iter()
            .any(|e| e.kind == k && e.start_s < b && e.end_s > a)
    };
    let mut report = EvalReport::empty(MatchMode::Clip, clip_s);
    for k in Kind::ALL {
        let c = report.per_kind.entry(k).or_default();
        for clip in 0..clips {
            match (positive(hyp, k, clip), positive(reference, k, clip)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
    }
    Ok(report)
}

/// Score many recordings, pairing hypothesis and reference sets by id.
/// A reference with no hypothesis counts as an empty hypothesis.
pub fn score_corpus(
    hyps: &[AnnotationSet],
    refs: &[AnnotationSet],
    iou_min: f64,
) -> Result<EvalReport> {
    let mut total = EvalReport::empty(MatchMode::Event, iou_min);
    for r in refs {
        let empty = AnnotationSet {
            recording_id: r.recording_id.clone(),
            events: Vec::new(),
        };
        let h = hyps
            .iter()
            .find(|h| h.recording_id == r.recording_id)
            .unwrap_or(&empty);
        total.absorb(score(h, r, iou_min)?);
    }
    for h in hyps {
        if !refs.iter().any(|r| r.recording_id == h.recording_id) {
            let empty = AnnotationSet {
                recording_id: h.recording_id.clone(),
                events: Vec::new(),
            };
            total.absorb(score(h, &empty, iou_min)?);
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scale: f64,
    /// Overall F1 with rate normalization on.
    pub f1_normalized: f64,
    /// Overall F1 with the fixed minimum duration.
    pub f1_fixed: f64,
}

/// Generate every spec at each time scale, detect with and without rate
/// normalization, and report corpus F1 per scale.
pub fn rate_sweep(
    specs: &[SynthSpec],
    scales: &[f64],
    cfg: &RuleConfig,
    iou_min: f64,
) -> Result<Vec<SweepRow>> {
    let on = RuleConfig {
        rate_normalization_enabled: true,
        ..cfg.clone()
    };
    let off = RuleConfig {
        rate_normalization_enabled: false,
        ..cfg.clone()
    };
    let mut rows = Vec::with_capacity(scales.len());
    for &scale in scales {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scale {scale} must be positive"
            )));
        }
        let mut rep_on = EvalReport::empty(MatchMode::Event, iou_min);
        let mut rep_off = EvalReport::empty(MatchMode::Event, iou_min);
        for spec in specs {
            let scaled = SynthSpec {
                time_scale: spec.time_scale * scale,
                ..spec.clone()
            };
            let synth = synthgen::generate(&scaled)?;
            let id = &synth.annotations.recording_id;
            for (c, rep) in [(&on, &mut rep_on), (&off, &mut rep_off)] {
                let report = pipeline::detect(&synth.audio, Some(&synth.alignment), c, id)?;
                let hyp = AnnotationSet::from_events(id.clone(), &report.events);
                rep.absorb(score(&hyp, &synth.annotations, iou_min)?);
            }
        }
        rows.push(SweepRow {
            scale,
            f1_normalized: rep_on.overall().f1(),
            f1_fixed: rep_off.overall().f1(),
        });
    }
    Ok(rows)
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = format!("{:<24}", "scale");
    for r in rows {
        let _ = write!(out, "{:>8.2}", r.scale);
    }
    out.push('\n');
    let _ = write!(out, "{:<24}", "fixed threshold");
    for r in rows {
        let _ = write!(out, "{:>8.3}", r.f1_fixed);
    }
    out.push('\n');
    let _ = write!(out, "{:<24}", "rate normalized");
    for r in rows {
        let _ = write!(out, "{:>8.3}", r.f1_normalized);
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(id: &str, ev: &[(Kind, f64, f64)]) -> AnnotationSet {
        AnnotationSet::new(
            id,
            ev.iter()
                .map(|&(kind, start_s, end_s)| Annotation {
                    kind,
                    start_s,
                    end_s,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_is_perfect() {
        let r = set(
            "a",
            &[
                (Kind::Block, 0.0, 0.5),
                (Kind::Prolongation, 1.0, 1.5),
                (Kind::SoundRep, 2.0, 2.3),
                (Kind::WordRep, 3.0, 3.6),
            ],
        );
        let rep = score(&r, &r, 0.5).unwrap();
        for k in Kind::ALL {
            assert_eq!(rep.kind(k).f1(), 1.0);
        }
        assert_eq!(rep.overall().f1(), 1.0);
    }

    #[test]
    fn empty_hypothesis() {
        let r = set(
            "a",
            &[
                (Kind::Block, 0.0, 0.5),
                (Kind::Block, 1.0, 1.5),
                (Kind::WordRep, 2.0, 2.5),
            ],
        );
        let rep = score(&set("a", &[]), &r, 0.5).unwrap();
        let o = rep.overall();
        assert_eq!((o.precision(), o.recall(), o.f1()), (0.0, 0.0, 0.0));
        assert_eq!(o.fn_, 3);
    }

    #[test]
    fn iou_point_eight_counts() {
        let r = set("a", &[(Kind::Prolongation, 1.0, 1.5)]);
        let h = set("a", &[(Kind::Prolongation, 1.05, 1.45)]);
        let rep = score(&h, &r, 0.5).unwrap();
        assert_eq!(rep.kind(Kind::Prolongation).tp, 1);
        assert!((rep.matches[0].iou - 0.8).abs() < 1e-12);
    }

    #[test]
    fn kind_must_agree() {
        let r = set("a", &[(Kind::Prolongation, 1.0, 1.5)]);
        let h = set("a", &[(Kind::Block, 1.0, 1.5)]);
        let rep = score(&h, &r, 0.5).unwrap();
        assert_eq!(rep.overall().tp, 0);
        assert_eq!(rep.overall().fp, 1);
    }

    #[test]
    fn mismatched_recordings() {
        assert!(matches!(
            score(&set("a", &[]), &set("b", &[]), 0.5),
            Err(Error::RecordingMismatch { .. })
        ));
    }

    #[test]
    fn swap_exchanges_precision_and_recall() {
        let r = set("a", &[(Kind::Block, 0.0, 0.5), (Kind::Block, 1.0, 1.5)]);
        let h = set("a", &[(Kind::Block, 0.05, 0.5), (Kind::SoundRep, 3.0, 3.3)]);
        let ab = score(&h, &r, 0.5).unwrap().overall();
        let ba = score(&r, &h, 0.5).unwrap().overall();
        assert_eq!(ab.precision(), ba.recall());
        assert_eq!(ab.recall(), ba.precision());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let r = set(
            "rec",
            &[(Kind::Block, 0.0, 0.5), (Kind::WordRep, 1.0, 1.25)],
        );
        let parsed = AnnotationSet::parse_csv(&r.to_csv()).unwrap();
        assert_eq!(parsed, vec![r]);
        match AnnotationSet::parse_csv("rec,block,0,1\nrec,stammer,0,1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(AnnotationSet::parse_csv("rec,block,1,0.5\n").is_err());
    }

    #[test]
    fn clip_mode() {
        let r = set("a", &[(Kind::Block, 0.5, 1.0), (Kind::Block, 7.0, 7.5)]);
        let h = set("a", &[(Kind::Block, 2.5, 3.5)]);
        let rep = score_clips(&h, &r, 9.0, CLIP_S).unwrap();
        let b = rep.kind(Kind::Block);
        // clips: [0,3) ref+hyp, [3,6) hyp only, [6,9) ref only
        assert_eq!((b.tp, b.fp, b.fn_), (1, 1, 1));
    }

    /// Exhaustive optimum: maximum number of valid pairs, ties broken by
    /// total IoU.
    fn optimal(hyp: &[Annotation], reference: &[Annotation], iou_min: f64) -> (usize, f64) {
        fn go(
            r: usize,
            hyp: &[Annotation],
            reference: &[Annotation],
            used: &mut Vec<bool>,
            iou_min: f64,
        ) -> (usize, f64) {
            if r == reference.len() {
                return (0, 0.0);
            }
            let mut best = go(r + 1, hyp, reference, used, iou_min);
            for h in 0..hyp.len() {
                if used[h] || hyp[h].kind != reference[r].kind {
                    continue;
                }
                let iou = reference[r].iou(&hyp[h]);
                if iou < iou_min {
                    continue;
                }
                used[h] = true;
                let (n, s) = go(r + 1, hyp, reference, used, iou_min);
                used[h] = false;
                let cand = (n + 1, s + iou);
                if cand.0 > best.0 || (cand.0 == best.0 && cand.1 > best.1 + 1e-12) {
                    best = cand;
                }
            }
            best
        }
        go(0, hyp, reference, &mut vec![false; hyp.len()], iou_min)
    }

    /// Non-overlapping events of each kind, as produced by annotators and by
    /// the cascade.
    fn random_layer(rng: &mut ChaCha8Rng, n: usize) -> Vec<Annotation> {
        let mut out = Vec::new();
        let mut t = [0.0f64; 4];
        for _ in 0..n {
            let k = rng.gen_range(0..2);
            let start = t[k] + rng.gen_range(0.0..0.6);
            let end = start + rng.gen_range(0.1..1.0);
            t[k] = end;
            out.push(Annotation {
                kind: Kind::ALL[k],
                start_s: start,
                end_s: end,
            });
        }
        out
    }

    #[test]
    fn greedy_equals_optimal_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5000 {
            let nr = rng.gen_range(0..=3);
            let nh = rng.gen_range(0..=3);
            let reference = random_layer(&mut rng, nr);
            let hyp = random_layer(&mut rng, nh);
            let greedy = greedy_match(&hyp, &reference, 0.5);
            let (n, s) = optimal(&hyp, &reference, 0.5);
            assert_eq!(greedy.len(), n);
            let gs: f64 = greedy.iter().map(|m| m.2).sum();
            assert!((gs - s).abs() < 1e-9);
        }
    }

    #[test]
    fn adding_a_true_positive_never_lowers_recall() {
        let r = set("a", &[(Kind::Block, 0.0, 0.5), (Kind::Block, 1.0, 1.5)]);
        let h1 = set("a", &[(Kind::Block, 0.0, 0.5)]);
        let h2 = set("a", &[(Kind::Block, 0.0, 0.5), (Kind::Block, 1.0, 1.4)]);
        let r1 = score(&h1, &r, 0.5).unwrap().overall().recall();
        let r2 = score(&h2, &r, 0.5).unwrap().overall().recall();
        assert!(r2 >= r1);
    }

    #[test]
    fn empty_scale_list() {
        assert!(rate_sweep(&[], &[], &RuleConfig::default(), 0.5)
            .unwrap()
            .is_empty());
    }
}
