//! Audio loading and the ingestion chain: resample to 16 kHz, normalize
//! level, pre-emphasize, and mark speech frames.

use std::f64::consts::PI;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::config::RuleConfig;
use crate::error::{Error, Result};
use crate::framing::{self, FRAME_LEN, HOP_LEN, HOP_S, SAMPLE_RATE};

/// Mono audio with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// RMS level in dBFS; `None` for an all-zero buffer.
    pub fn rms_db(&self) -> Option<f64> {
        if self.samples.is_empty() {
            return None;
        }
        let ms = self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64;
        (ms > 0.0).then(|| 10.0 * ms.log10())
    }
}

/// Frame-aligned speech/non-speech decisions on the canonical framing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VadMask {
    pub speech: Vec<bool>,
    pub hop_s: f64,
    /// Frame energy (dBFS) at or below which a frame counts as silence.
    pub threshold_db: f64,
}

impl VadMask {
    pub fn len(&self) -> usize {
        self.speech.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speech.is_empty()
    }

    pub fn speech_frames(&self) -> usize {
        self.speech.iter().filter(|s| **s).count()
    }

    pub fn speech_duration_s(&self) -> f64 {
        self.speech_frames() as f64 * self.hop_s
    }
}

pub fn load_audio(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.len() == 0 {
        return Err(Error::CorruptHeader {
            path: path.into(),
            reason: "file is 0 bytes".into(),
        });
    }
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::CorruptHeader {
            path: path.into(),
            reason: "zero channels".into(),
        });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| (v as f64).clamp(-1.0, 1.0)))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (hound::SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| (v as f64 / scale).clamp(-1.0, 1.0)))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| wav_error(path, e))?
        }
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat {
                path: path.into(),
                reason: format!("{fmt:?} with {bits} bits per sample"),
            })
        }
    };
    if interleaved.is_empty() {
        return Err(Error::EmptyAudio { path: path.into() });
    }
    let samples = interleaved
        .chunks(channels)
        .map(|c| c.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok(AudioBuffer::new(samples, spec.sample_rate))
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        // hound reports short reads as synthetic io errors; only errors
        // from the OS are real I/O failures
        hound::Error::IoError(source) if source.raw_os_error().is_none() => Error::CorruptHeader {
            path: path.into(),
            reason: format!("truncated: {source}"),
        },
        hound::Error::IoError(source) => Error::io(path, source),
        hound::Error::FormatError(reason) => Error::CorruptHeader {
            path: path.into(),
            reason: reason.into(),
        },
        hound::Error::Unsupported => Error::UnsupportedFormat {
            path: path.into(),
            reason: "codec not supported (linear PCM or 32-bit float only)".into(),
        },
        other => Error::UnsupportedFormat {
            path: path.into(),
            reason: other.to_string(),
        },
    }
}

/// Write 16-bit PCM mono.
pub fn write_wav(path: impl AsRef<Path>, buf: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_wav(buf);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Encode as a 16-bit PCM mono WAV image.
pub fn encode_wav(buf: &AudioBuffer) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buf.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = std::io::Cursor::new(Vec::with_capacity(44 + buf.len() * 2));
    {
        let mut w = hound::WavWriter::new(&mut cursor, spec).expect("in-memory writer");
        for &s in &buf.samples {
            let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
            w.write_sample(v).expect("in-memory write");
        }
        w.finalize().expect("in-memory finalize");
    }
    cursor.into_inner()
}

/// Decode a WAV image held in memory.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    let origin = Path::new("<upload>");
    if bytes.is_empty() {
        return Err(Error::CorruptHeader {
            path: origin.into(),
            reason: "payload is 0 bytes".into(),
        });
    }
    // in memory, every read failure means the bytes themselves are bad
    let wav_error = |e: hound::Error| match wav_error(origin, e) {
        Error::Io { source, .. } => Error::CorruptHeader {
            path: origin.into(),
            reason: source.to_string(),
        },
        other => other,
    };
    let reader = hound::WavReader::new(std::io::Cursor::new(bytes)).map_err(wav_error)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| (v as f64).clamp(-1.0, 1.0)))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_error)?,
        (hound::SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| (v as f64 / scale).clamp(-1.0, 1.0)))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_error)?
        }
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat {
                path: origin.into(),
                reason: format!("{fmt:?} with {bits} bits per sample"),
            })
        }
    };
    if interleaved.is_empty() {
        return Err(Error::EmptyAudio {
            path: origin.into(),
        });
    }
    let samples = interleaved
        .chunks(channels)
        .map(|c| c.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok(AudioBuffer::new(samples, spec.sample_rate))
}

const RESAMPLE_TAPS: usize = 64;
const KAISER_BETA: f64 = 8.0;
const MAX_EXACT_PHASES: usize = 4096;

/// Band-limited resampling with a 64-tap Kaiser-windowed sinc (beta 8).
pub fn resample(buf: &AudioBuffer, target_hz: u32) -> Result<AudioBuffer> {
    if target_hz == 0 {
        return Err(Error::InvalidArgument("target rate must be > 0".into()));
    }
    if buf.sample_rate == 0 {
        return Err(Error::InvalidArgument("source rate must be > 0".into()));
    }
    if buf.sample_rate == target_hz {
        return Ok(buf.clone());
    }
    let g = gcd(buf.sample_rate as u64, target_hz as u64);
    let up = (target_hz as u64 / g) as usize;
    let down = (buf.sample_rate as u64 / g) as usize;
    let out_len = (buf.len() as u128 * up as u128 / down as u128) as usize;
    // Cutoff relative to the input Nyquist.
    let cutoff = (target_hz as f64 / buf.sample_rate as f64).min(1.0);
    let half = (RESAMPLE_TAPS / 2) as isize;
    let x = &buf.samples;

    let kernel = |offset: f64| -> f64 {
        // offset in input samples from the output instant
        let arg = offset / half as f64;
        if arg.abs() >= 1.0 {
            return 0.0;
        }
        cutoff * sinc(cutoff * offset) * kaiser(arg, KAISER_BETA)
    };

    let table: Option<Vec<[f64; RESAMPLE_TAPS]>> = (up <= MAX_EXACT_PHASES).then(|| {
        (0..up)
            .map(|p| {
                let frac = p as f64 / up as f64;
                let mut taps = [0.0; RESAMPLE_TAPS];
                for (k, t) in taps.iter_mut().enumerate() {
                    let j = k as isize - half + 1;
                    *t = kernel(j as f64 - frac);
                }
                taps
            })
            .collect()
    });

    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let num = n as u128 * down as u128;
        let base = (num / up as u128) as isize;
        let phase = (num % up as u128) as usize;
        let mut acc = 0.0;
        match &table {
            Some(table) => {
                let taps = &table[phase];
                for (k, t) in taps.iter().enumerate() {
                    let idx = base + k as isize - half + 1;
                    if idx >= 0 && (idx as usize) < x.len() {
                        acc += x[idx as usize] * t;
                    }
                }
            }
            None => {
                let frac = phase as f64 / up as f64;
                for k in 0..RESAMPLE_TAPS {
                    let j = k as isize - half + 1;
                    let idx = base + j;
                    if idx >= 0 && (idx as usize) < x.len() {
                        acc += x[idx as usize] * kernel(j as f64 - frac);
                    }
                }
            }
        }
        out.push(acc.clamp(-1.0, 1.0));
    }
    Ok(AudioBuffer::new(out, target_hz))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Kaiser window evaluated at `x` in [-1, 1].
fn kaiser(x: f64, beta: f64) -> f64 {
    bessel_i0(beta * (1.0 - x * x).max(0.0).sqrt()) / bessel_i0(beta)
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Result of level normalization.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub buffer: AudioBuffer,
    pub gain: f64,
    /// The input was digital silence and was returned unchanged.
    pub silent: bool,
    /// The gain was reduced to keep samples within [-1, 1].
    pub peak_limited: bool,
}

/// Scale to a wideband RMS level of `target_db` dBFS.
pub fn normalize_loudness(buf: &AudioBuffer, target_db: f64) -> Result<Normalized> {
    if buf.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot normalize an empty buffer".into(),
        ));
    }
    let Some(level) = buf.rms_db() else {
        warn!("normalize_loudness: all-silent buffer left unchanged");
        return Ok(Normalized {
            buffer: buf.clone(),
            gain: 1.0,
            silent: true,
            peak_limited: false,
        });
    };
    let mut gain = 10f64.powf((target_db - level) / 20.0);
    let peak = buf.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut peak_limited = false;
    if peak * gain > 1.0 {
        gain = 1.0 / peak;
        peak_limited = true;
        warn!("normalize_loudness: gain limited by peak, level below target");
    }
    let samples = buf.samples.iter().map(|x| x * gain).collect();
    Ok(Normalized {
        buffer: AudioBuffer::new(samples, buf.sample_rate),
        gain,
        silent: false,
        peak_limited,
    })
}

/// First-order pre-emphasis: `y[0] = x[0]`, `y[n] = x[n] - coeff * x[n-1]`.
pub fn preemphasize(buf: &AudioBuffer, coeff: f64) -> Result<AudioBuffer> {
    if !(0.0..1.0).contains(&coeff) {
        return Err(Error::InvalidArgument(format!(
            "pre-emphasis coefficient must lie in [0, 1), got {coeff}"
        )));
    }
    let x = &buf.samples;
    let mut y = Vec::with_capacity(x.len());
    if let Some(&first) = x.first() {
        y.push(first);
    }
    y.extend(x.windows(2).map(|w| w[1] - coeff * w[0]));
    Ok(AudioBuffer::new(y, buf.sample_rate))
}

/// Frame-level energy VAD: noise floor from a low percentile of frame
/// energies plus a margin, then non-speech gaps shorter than the hangover
/// are bridged.
pub fn compute_vad(buf: &AudioBuffer, cfg: &RuleConfig) -> VadMask {
    let n = framing::frame_count(buf.len());
    let energies: Vec<f64> = (0..n)
        .map(|i| framing::frame_energy_db(framing::frame(&buf.samples, i)))
        .collect();
    let floor = percentile(&energies, cfg.vad_noise_percentile).unwrap_or(-120.0);
    let threshold_db = (floor + cfg.vad_margin_db).max(cfg.vad_min_db);
    let mut speech: Vec<bool> = energies.iter().map(|e| *e > threshold_db).collect();

    let hangover = (cfg.vad_hangover_s / HOP_S).round() as usize;
    let mut i = 0;
    while i < n {
        if speech[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && !speech[i] {
            i += 1;
        }
        let internal = start > 0 && i < n;
        if internal && i - start < hangover {
            speech[start..i].iter_mut().for_each(|s| *s = true);
        }
    }
    VadMask {
        speech,
        hop_s: HOP_S,
        threshold_db,
    }
}

/// Linear-interpolated percentile (0..=100) of `values`.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (rank - lo as f64))
}

/// Maps times on a trimmed buffer back to the original recording.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeMap {
    /// `(trimmed_start_s, original_start_s, length_s)` per kept piece.
    pieces: Vec<(f64, f64, f64)>,
}

impl TimeMap {
    pub fn identity(duration_s: f64) -> Self {
        Self {
            pieces: vec![(0.0, 0.0, duration_s)],
        }
    }

    pub fn to_original(&self, t: f64) -> f64 {
        let Some(first) = self.pieces.first() else {
            return t;
        };
        let mut piece = first;
        for p in &self.pieces {
            if t >= p.0 {
                piece = p;
            }
        }
        piece.1 + (t - piece.0)
    }

    /// Inverse of `to_original`. Times inside a removed stretch snap to the
    /// nearest kept boundary.
    pub fn to_trimmed(&self, t: f64) -> f64 {
        let mut best = t;
        let mut best_dist = f64::INFINITY;
        for &(trim0, orig0, len) in &self.pieces {
            let clamped = t.clamp(orig0, orig0 + len);
            let dist = (t - clamped).abs();
            if dist < best_dist {
                best_dist = dist;
                best = trim0 + (clamped - orig0);
            }
        }
        best
    }

    pub fn is_identity(&self) -> bool {
        self.pieces.len() == 1 && self.pieces[0].0 == 0.0 && self.pieces[0].1 == 0.0
    }
}

/// Remove leading and trailing silence and internal silences longer than
/// `trim_silence_s`. Shorter pauses are kept intact.
pub fn trim_silence(buf: &AudioBuffer, vad: &VadMask, cfg: &RuleConfig) -> (AudioBuffer, TimeMap) {
    let n = vad.len();
    let Some(first) = vad.speech.iter().position(|s| *s) else {
        return (buf.clone(), TimeMap::identity(buf.duration_s()));
    };
    let last = vad.speech.iter().rposition(|s| *s).unwrap_or(first);
    let keep = (cfg.trim_keep_s / HOP_S).round() as usize;
    let long_gap = (cfg.trim_silence_s / HOP_S).round() as usize;

    // kept frame ranges, inclusive
    let mut ranges: Vec<(usize, usize)> = Vec::new();
    let mut start = first.saturating_sub(keep);
    let mut i = first;
    while i <= last {
        if vad.speech[i] {
            i += 1;
            continue;
        }
        let gap_start = i;
        while i <= last && !vad.speech[i] {
            i += 1;
        }
        if i - gap_start > long_gap {
            ranges.push((start, gap_start - 1 + keep));
            start = i - keep;
        }
    }
    ranges.push((start, (last + keep).min(n.saturating_sub(1))));

    let mut samples = Vec::new();
    let mut pieces = Vec::new();
    for (a, b) in ranges {
        let s0 = a * HOP_LEN;
        let s1 = (b * HOP_LEN + FRAME_LEN).min(buf.len());
        pieces.push((
            samples.len() as f64 / SAMPLE_RATE as f64,
            s0 as f64 / SAMPLE_RATE as f64,
            (s1 - s0) as f64 / SAMPLE_RATE as f64,
        ));
        samples.extend_from_slice(&buf.samples[s0..s1]);
    }
    (
        AudioBuffer::new(samples, buf.sample_rate),
        TimeMap { pieces },
    )
}
