//! Synthetic utterances with planted, exactly annotated dysfluencies.
//!
//! The "speech" is built from harmonic vowels shaped by a formant envelope
//! and short noise consonants. The detectors only look at stationarity,
//! periodicity, silence and spectral balance, all of which the generator
//! controls directly. Every duration in a plan is multiplied by the spec's
//! `time_scale`, so one plan rendered at several scales gives the same
//! utterance spoken at different rates.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio_io::{self, AudioBuffer};
use crate::detectors::{Kind, WordAlignment, WordToken};
use crate::error::{Error, Result};
use crate::eval::{Annotation, AnnotationSet};
use crate::framing::{FRAME_LEN, SAMPLE_RATE};

const SR: f64 = SAMPLE_RATE as f64;
/// RMS of a vowel before the pipeline renormalizes the whole utterance.
const VOWEL_RMS: f64 = 0.1;
const CONSONANT_DB: f64 = -14.0;
const CONSONANT_S: f64 = 0.045;
const ATTACK_S: f64 = 0.02;
const RELEASE_S: f64 = 0.04;
const PROLONGATION_RAMP_S: f64 = 0.01;
const BURST_DIP_DB: f64 = -30.0;
const CUTOFF_BURST_S: f64 = 0.02;
const CUTOFF_BURST_DB: f64 = 3.0;
const AUDIBLE_BLOCK_DB: f64 = -40.0;
const EDGE_SILENCE_S: f64 = 0.5;

/// F1, F2, F3 of a small vowel inventory.
const VOWELS: [[f64; 3]; 5] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
];
const ONSETS: [&str; 8] = ["b", "d", "g", "k", "m", "n", "s", "t"];
const NUCLEI: [&str; 5] = ["a", "i", "u", "e", "o"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Segment {
    /// Consonant onset plus vowel, `dur` seconds in total.
    Syllable {
        dur: f64,
    },
    /// Consonant onset plus a steady vowel of `dur` seconds (the annotated part).
    Prolongation {
        dur: f64,
    },
    /// `cycles` re-articulations of one vowel, `period_s` apart.
    RepBurst {
        cycles: usize,
        period_s: f64,
    },
    /// A broadband cut-off transient, then `dur` seconds of silence.
    SilentBlock {
        dur: f64,
    },
    /// Quiet high-frequency noise.
    AudibleBlock {
        dur: f64,
    },
    Pause {
        dur: f64,
    },
    /// The same syllable spoken twice, each `dur` seconds.
    WordRep {
        dur: f64,
    },
}

impl Segment {
    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidSpec(format!("{what} in {self:?}")));
        match *self {
            Segment::RepBurst { cycles, period_s } => {
                if cycles < 2 {
                    return bad("fewer than two cycles");
                }
                if !(period_s > 0.0 && period_s.is_finite()) {
                    return bad("non-positive period");
                }
            }
            Segment::Syllable { dur }
            | Segment::Prolongation { dur }
            | Segment::SilentBlock { dur }
            | Segment::AudibleBlock { dur }
            | Segment::Pause { dur }
            | Segment::WordRep { dur } => {
                if !(dur > 0.0 && dur.is_finite()) {
                    return bad("non-positive duration");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default)]
    pub recording_id: String,
    pub seed: u64,
    /// Nominal syllables per second the plan was drawn at.
    pub base_rate: f64,
    #[serde(default = "one")]
    pub time_scale: f64,
    pub plan: Vec<Segment>,
}

fn one() -> f64 {
    1.0
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "time_scale must be positive, got {}",
                self.time_scale
            )));
        }
        if !(self.base_rate > 0.0 && self.base_rate.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "base_rate must be positive, got {}",
                self.base_rate
            )));
        }
        self.plan.iter().try_for_each(Segment::validate)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SynthSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone)]
pub struct Synthesized {
    pub audio: AudioBuffer,
    pub annotations: AnnotationSet,
    pub alignment: WordAlignment,
    /// Number of planted syllable nuclei.
    pub nuclei: usize,
}

struct Voice {
    f0: f64,
    vowel: usize,
    onset: usize,
    seed: u64,
}

struct Renderer {
    out: Vec<f64>,
    scale: f64,
    rng: ChaCha8Rng,
    last_vowel: usize,
    last_word: String,
    annotations: Vec<Annotation>,
    tokens: Vec<WordToken>,
    nuclei: usize,
}

fn n_samples(secs: f64) -> usize {
    (secs * SR).round() as usize
}

/// Harmonic amplitude from a three-formant envelope with a -6 dB/octave tilt.
fn formant_gain(f: f64, formants: &[f64; 3], f0: f64) -> f64 {
    let resonance: f64 = formants
        .iter()
        .zip([1.0, 0.7, 0.4])
        .map(|(fc, g)| {
            let bw = 60.0 + 0.06 * fc;
            g / (1.0 + ((f - fc) / bw).powi(2))
        })
        .sum();
    (0.05 + resonance) * f0 / f
}

/// A vowel at constant F0, scaled to `VOWEL_RMS`.
fn vowel(v: &Voice, n: usize) -> Vec<f64> {
    let formants = &VOWELS[v.vowel];
    let mut rng = ChaCha8Rng::seed_from_u64(v.seed);
    let partials: Vec<(f64, f64, f64)> = (1..)
        .map(|k| k as f64 * v.f0)
        .take_while(|f| *f < 5000.0)
        .map(|f| {
            (
                f,
                formant_gain(f, formants, v.f0),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / SR;
            partials
                .iter()
                .map(|(f, a, ph)| a * (2.0 * PI * f * t + ph).sin())
                .sum()
        })
        .collect();
    let rms = (x.iter().map(|s| s * s).sum::<f64>() / n.max(1) as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|s| *s *= VOWEL_RMS / rms);
    }
    x
}

/// First-differenced white noise at the given RMS.
fn hiss(n: usize, rms: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white: Vec<f64> = (0..=n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut x: Vec<f64> = white.windows(2).map(|w| w[1] - w[0]).collect();
    let r = (x.iter().map(|s| s * s).sum::<f64>() / n.max(1) as f64).sqrt();
    if r > 0.0 {
        x.iter_mut().for_each(|s| *s *= rms / r);
    }
    x
}

fn raised_cosine_edges(x: &mut [f64], attack: usize, release: usize) {
    let n = x.len();
    for (i, v) in x.iter_mut().take(attack).enumerate() {
        *v *= 0.5 - 0.5 * (PI * i as f64 / attack as f64).cos();
    }
    for j in 0..release.min(n) {
        x[n - 1 - j] *= 0.5 - 0.5 * (PI * j as f64 / release as f64).cos();
    }
}

impl Renderer {
    fn now(&self) -> f64 {
        self.out.len() as f64 / SR
    }

    fn voice(&mut self) -> Voice {
        let mut vowel = self.rng.gen_range(0..VOWELS.len() - 1);
        if vowel >= self.last_vowel {
            vowel += 1;
        }
        self.last_vowel = vowel;
        Voice {
            f0: self.rng.gen_range(120.0..220.0),
            vowel,
            onset: self.rng.gen_range(0..ONSETS.len()),
            seed: self.rng.gen(),
        }
    }

    fn word(&mut self, v: &Voice) -> String {
        let mut w = format!("{}{}", ONSETS[v.onset], NUCLEI[v.vowel]);
        if w == self.last_word {
            w.push('h');
        }
        self.last_word = w.clone();
        w
    }

    fn silence(&mut self, secs: f64) {
        let n = n_samples(secs);
        self.out.extend(std::iter::repeat_n(0.0, n));
    }

    fn consonant(&mut self, v: &Voice) {
        let n = n_samples(CONSONANT_S * self.scale);
        let mut c = hiss(n, VOWEL_RMS * db(CONSONANT_DB), v.seed ^ 0x5eed);
        let ramp = n_samples(0.005 * self.scale);
        raised_cosine_edges(&mut c, ramp, ramp);
        self.out.extend(c);
    }

    /// Consonant plus vowel filling `dur` seconds (already scaled).
    fn syllable(&mut self, v: &Voice, dur: f64) {
        let start = self.now();
        self.consonant(v);
        let n = n_samples(dur).saturating_sub(n_samples(CONSONANT_S * self.scale));
        let mut x = vowel(v, n);
        raised_cosine_edges(
            &mut x,
            n_samples(ATTACK_S * self.scale),
            n_samples(RELEASE_S * self.scale),
        );
        self.out.extend(x);
        self.nuclei += 1;
        let word = self.word(v);
        self.tokens.push(WordToken {
            word,
            start_s: start,
            end_s: self.now(),
        });
    }

    fn annotate(&mut self, kind: Kind, start_s: f64) {
        self.annotations.push(Annotation {
            kind,
            start_s,
            end_s: self.now(),
        });
    }

    fn render(&mut self, seg: &Segment) {
        let s = self.scale;
        match *seg {
            Segment::Syllable { dur } => {
                let v = self.voice();
                self.syllable(&v, dur * s);
            }
            Segment::Prolongation { dur } => {
                let v = self.voice();
                let token_start = self.now();
                self.consonant(&v);
                let start = self.now();
                let mut x = vowel(&v, n_samples(dur * s));
                let ramp = n_samples(PROLONGATION_RAMP_S * s);
                raised_cosine_edges(&mut x, ramp, ramp);
                self.out.extend(x);
                self.annotate(Kind::Prolongation, start);
                self.nuclei += 1;
                let word = self.word(&v);
                self.tokens.push(WordToken {
                    word,
                    start_s: token_start,
                    end_s: self.now(),
                });
            }
            Segment::RepBurst { cycles, period_s } => {
                let v = self.voice();
                let start = self.now();
                let n = n_samples(cycles as f64 * period_s * s);
                let floor = db(BURST_DIP_DB);
                let period = period_s * s;
                let x: Vec<f64> = vowel(&v, n)
                    .into_iter()
                    .enumerate()
                    .map(|(i, y)| {
                        let g = 0.5 - 0.5 * (2.0 * PI * (i as f64 / SR) / period).cos();
                        y * (floor + (1.0 - floor) * g)
                    })
                    .collect();
                self.out.extend(x);
                self.annotate(Kind::SoundRep, start);
                self.nuclei += cycles;
            }
            Segment::SilentBlock { dur } => {
                let seed = self.rng.gen();
                let n = n_samples(CUTOFF_BURST_S * s);
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                let amp = VOWEL_RMS * db(CUTOFF_BURST_DB) * 3f64.sqrt();
                self.out
                    .extend((0..n).map(|_| amp * r.gen_range(-1.0..1.0)));
                let start = self.now();
                self.silence(dur * s);
                self.annotate(Kind::Block, start);
            }
            Segment::AudibleBlock { dur } => {
                let seed = self.rng.gen();
                let start = self.now();
                let mut x = hiss(n_samples(dur * s), VOWEL_RMS * db(AUDIBLE_BLOCK_DB), seed);
                let ramp = n_samples(0.005 * s);
                raised_cosine_edges(&mut x, ramp, ramp);
                self.out.extend(x);
                self.annotate(Kind::Block, start);
            }
            Segment::Pause { dur } => self.silence(dur * s),
            Segment::WordRep { dur } => {
                let v = self.voice();
                let start = self.now();
                self.syllable(&v, dur * s);
                // the repeat must keep the same token text
                self.last_word.clear();
                self.syllable(&v, dur * s);
                self.annotate(Kind::WordRep, start);
            }
        }
    }
}

fn db(x: f64) -> f64 {
    10f64.powf(x / 20.0)
}

pub fn generate(spec: &SynthSpec) -> Result<Synthesized> {
    spec.validate()?;
    let mut r = Renderer {
        out: Vec::new(),
        scale: spec.time_scale,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        last_vowel: VOWELS.len(),
        last_word: String::new(),
        annotations: Vec::new(),
        tokens: Vec::new(),
        nuclei: 0,
    };
    r.silence(EDGE_SILENCE_S * spec.time_scale);
    for seg in &spec.plan {
        r.render(seg);
    }
    r.silence(EDGE_SILENCE_S * spec.time_scale);
    if r.out.len() < FRAME_LEN {
        return Err(Error::InvalidSpec(format!(
            "plan renders {} samples, shorter than one analysis frame",
            r.out.len()
        )));
    }
    let peak = r.out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.99 {
        r.out.iter_mut().for_each(|v| *v *= 0.99 / peak);
    }
    let recording_id = if spec.recording_id.is_empty() {
        format!("synth-{}", spec.seed)
    } else {
        spec.recording_id.clone()
    };
    Ok(Synthesized {
        audio: AudioBuffer::new(r.out, SAMPLE_RATE),
        annotations: AnnotationSet {
            recording_id,
            events: r.annotations,
        },
        alignment: WordAlignment { tokens: r.tokens },
        nuclei: r.nuclei,
    })
}

fn syllables(rng: &mut ChaCha8Rng, plan: &mut Vec<Segment>, count: usize, rate: f64) {
    for _ in 0..count {
        plan.push(Segment::Syllable {
            dur: rng.gen_range(0.85..1.15) / rate,
        });
        if rng.gen_bool(0.1) {
            plan.push(Segment::Pause {
                dur: rng.gen_range(0.15..0.3),
            });
        }
    }
}

/// The acceptance corpus: 200 utterances at 3 to 4.5 syllables per second,
/// each with two or three planted events, all four kinds evenly mixed.
pub fn standard_corpus(seed: u64) -> Vec<SynthSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kind_cursor = 0usize;
    (0..200)
        .map(|u| {
            let rate = rng.gen_range(3.0..4.5);
            let mut plan = Vec::new();
            let count = rng.gen_range(2..4);
            syllables(&mut rng, &mut plan, count, rate);
            let n_events = 2 + u % 2;
            for _ in 0..n_events {
                let seg = match kind_cursor % 5 {
                    0 => Segment::Prolongation {
                        dur: rng.gen_range(0.6..0.9),
                    },
                    1 => Segment::RepBurst {
                        cycles: rng.gen_range(3..=4),
                        period_s: rng.gen_range(0.09..0.11),
                    },
                    2 => Segment::SilentBlock {
                        dur: rng.gen_range(0.45..0.8),
                    },
                    3 => Segment::AudibleBlock {
                        dur: rng.gen_range(0.3..0.5),
                    },
                    _ => Segment::WordRep {
                        dur: rng.gen_range(0.26..0.32),
                    },
                };
                kind_cursor += 1;
                plan.push(seg);
                let count = rng.gen_range(2..4);
                syllables(&mut rng, &mut plan, count, rate);
            }
            SynthSpec {
                recording_id: format!("std{u:03}"),
                seed: rng.gen(),
                base_rate: rate,
                time_scale: 1.0,
                plan,
            }
        })
        .collect()
}

/// Utterances for rate sweeps: plain syllables and prolongations only, so
/// that time scaling changes nothing but the tempo.
pub fn rate_corpus(seed: u64, count: usize) -> Vec<SynthSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|u| {
            let rate = rng.gen_range(3.3..3.8);
            let mut plan = Vec::new();
            for _ in 0..2 {
                for _ in 0..rng.gen_range(3..6) {
                    plan.push(Segment::Syllable {
                        dur: rng.gen_range(0.9..1.1) / rate,
                    });
                }
                plan.push(Segment::Prolongation {
                    dur: rng.gen_range(1.5..1.9) / rate,
                });
            }
            for _ in 0..rng.gen_range(3..6) {
                plan.push(Segment::Syllable {
                    dur: rng.gen_range(0.9..1.1) / rate,
                });
            }
            SynthSpec {
                recording_id: format!("rate{u:03}"),
                seed: rng.gen(),
                base_rate: rate,
                time_scale: 1.0,
                plan,
            }
        })
        .collect()
}

/// One 420 ms prolongation between two runs of five syllables, timed so the
/// whole utterance runs at 3.2 syllables per second.
pub fn prolongation_trace(seed: u64) -> SynthSpec {
    const RATE: f64 = 3.2;
    const PROLONGED: f64 = 0.42;
    // the prolongation's onset consonant sits outside its annotated span
    let syl = (11.0 / RATE - PROLONGED - CONSONANT_S) / 10.0;
    let mut plan = vec![Segment::Syllable { dur: syl }; 5];
    plan.push(Segment::Prolongation { dur: PROLONGED });
    plan.extend(vec![Segment::Syllable { dur: syl }; 5]);
    SynthSpec {
        recording_id: "trace".into(),
        seed,
        base_rate: RATE,
        time_scale: 1.0,
        plan,
    }
}

/// Named presets: `standard-200`, `rate-N` and `trace`.
pub fn preset(name: &str, seed: u64) -> Result<Vec<SynthSpec>> {
    match name {
        "standard-200" => Ok(standard_corpus(seed)),
        "trace" => Ok(vec![prolongation_trace(seed)]),
        _ => name
            .strip_prefix("rate-")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|n| *n > 0)
            .map(|n| rate_corpus(seed, n))
            .ok_or_else(|| Error::InvalidSpec(format!("unknown preset `{name}`"))),
    }
}

/// Write `<id>.wav`, `<id>.csv` (annotations) and `<id>.words.csv`.
pub fn write_outputs(dir: &Path, synth: &Synthesized) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let id = &synth.annotations.recording_id;
    let wav = dir.join(format!("{id}.wav"));
    audio_io::write_wav(&wav, &synth.audio)?;
    let ann = dir.join(format!("{id}.csv"));
    std::fs::write(&ann, synth.annotations.to_csv()).map_err(|e| Error::io(&ann, e))?;
    let words = dir.join(format!("{id}.words.csv"));
    std::fs::write(&words, synth.alignment.to_csv()).map_err(|e| Error::io(&words, e))?;
    Ok(vec![wav, ann, words])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::dsp::autocorrelation;
    use crate::features::envelope::compute_envelope;

    fn spec(plan: Vec<Segment>) -> SynthSpec {
        SynthSpec {
            recording_id: "t".into(),
            seed: 1,
            base_rate: 3.2,
            time_scale: 1.0,
            plan,
        }
    }

    #[test]
    fn prolongation_annotation_exact() {
        let s = generate(&spec(vec![
            Segment::Syllable { dur: 0.3 },
            Segment::Prolongation { dur: 0.42 },
            Segment::Syllable { dur: 0.3 },
        ]))
        .unwrap();
        assert_eq!(s.annotations.events.len(), 1);
        let a = s.annotations.events[0];
        assert!((a.end_s - a.start_s - 0.42).abs() < 1.0 / SR);
        assert_eq!(a.kind, Kind::Prolongation);
    }

    #[test]
    fn time_scale_doubles_annotations() {
        let base = spec(vec![
            Segment::Syllable { dur: 0.3 },
            Segment::Prolongation { dur: 0.42 },
        ]);
        let one = generate(&base).unwrap();
        let two = generate(&SynthSpec {
            time_scale: 2.0,
            ..base
        })
        .unwrap();
        let (a, b) = (one.annotations.events[0], two.annotations.events[0]);
        assert!((b.start_s - 2.0 * a.start_s).abs() < 2.0 / SR);
        assert!((b.end_s - 2.0 * a.end_s).abs() < 2.0 / SR);
        assert!((two.audio.duration_s() - 2.0 * one.audio.duration_s()).abs() < 4.0 / SR);
    }

    #[test]
    fn rep_burst_envelope_period() {
        let s = generate(&spec(vec![Segment::RepBurst {
            cycles: 4,
            period_s: 0.125,
        }]))
        .unwrap();
        let a = s.annotations.events[0];
        let env = compute_envelope(&s.audio);
        let lo = (a.start_s * SR) as usize;
        let hi = (a.end_s * SR) as usize;
        // envelope decimated to 1 ms
        let x: Vec<f64> = env[lo..hi].iter().step_by(16).copied().collect();
        let acf = autocorrelation(&x, 300).unwrap();
        let lag = (50..=300)
            .max_by(|i, j| acf[*i].total_cmp(&acf[*j]))
            .unwrap();
        assert!((lag as f64 - 125.0).abs() <= 10.0, "{lag}");
    }

    #[test]
    fn same_seed_same_bytes() {
        let plan = standard_corpus(7).remove(3);
        let a = audio_io::encode_wav(&generate(&plan).unwrap().audio);
        let b = audio_io::encode_wav(&generate(&plan).unwrap().audio);
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&spec(vec![Segment::Pause { dur: -1.0 }])).is_err());
        assert!(generate(&SynthSpec {
            time_scale: 0.0,
            ..spec(vec![Segment::Pause { dur: 1.0 }])
        })
        .is_err());
        assert!(SynthSpec::from_json(
            r#"{"seed":1,"base_rate":3,"plan":[{"type":"syllable","dur":-0.2}]}"#
        )
        .is_err());
    }

    #[test]
    fn standard_corpus_shape() {
        let c = standard_corpus(7);
        assert_eq!(c.len(), 200);
        let events: usize = c
            .iter()
            .map(|s| {
                s.plan
                    .iter()
                    .filter(|p| !matches!(p, Segment::Syllable { .. } | Segment::Pause { .. }))
                    .count()
            })
            .sum();
        assert!(events >= 400, "{events}");
    }

    #[test]
    fn word_rep_alignment_repeats_token() {
        let s = generate(&spec(vec![
            Segment::Syllable { dur: 0.3 },
            Segment::WordRep { dur: 0.3 },
            Segment::Syllable { dur: 0.3 },
        ]))
        .unwrap();
        let w: Vec<_> = s.alignment.tokens.iter().map(|t| t.word.clone()).collect();
        assert_eq!(w.len(), 4);
        assert_eq!(w[1], w[2]);
        assert_ne!(w[0], w[1]);
        assert_ne!(w[2], w[3]);
        s.alignment.validate().unwrap();
    }
}
