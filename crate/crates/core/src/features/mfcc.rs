//! Mel-frequency cepstral coefficients with first and second deltas.
//!
//! Per frame: Hann window, 512-point DFT magnitude, 26 triangular mel
//! filters over 0-8000 Hz, natural log floored at 1e-10, orthonormal DCT-II,
//! coefficients c0..c12. Deltas use a +-2 frame regression with edge
//! replication.

use std::f64::consts::PI;

use super::dsp::MagnitudeSpectrum;
use super::FrameSeries;
use crate::audio_io::AudioBuffer;
use crate::error::{Error, Result};
use crate::framing::{self, FRAME_LEN};

pub const N_FFT: usize = 512;
pub const N_MELS: usize = 26;
pub const N_CEPS: usize = 13;
pub const MFCC_DIM: usize = 3 * N_CEPS;
pub const LOG_FLOOR: f64 = 1e-10;

pub type MfccFrame = [f64; MFCC_DIM];

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filter weights, `N_MELS` rows of `N_FFT/2 + 1` bins.
pub fn mel_filterbank(sample_rate: f64) -> Vec<Vec<f64>> {
    let bins = N_FFT / 2 + 1;
    let lo = hz_to_mel(0.0);
    let hi = hz_to_mel(sample_rate / 2.0);
    let edges: Vec<f64> = (0..N_MELS + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (N_MELS + 1) as f64))
        .collect();
    (0..N_MELS)
        .map(|m| {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sample_rate / N_FFT as f64;
                    if f <= left || f >= right {
                        0.0
                    } else if f <= center {
                        (f - left) / (center - left)
                    } else {
                        (right - f) / (right - center)
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II basis, `N_CEPS` rows of `N_MELS`.
fn dct_basis() -> Vec<[f64; N_MELS]> {
    (0..N_CEPS)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / N_MELS as f64).sqrt()
            } else {
                (2.0 / N_MELS as f64).sqrt()
            };
            let mut row = [0.0; N_MELS];
            for (n, v) in row.iter_mut().enumerate() {
                *v = scale * (PI * k as f64 * (2 * n + 1) as f64 / (2 * N_MELS) as f64).cos();
            }
            row
        })
        .collect()
}

/// Static coefficients for every canonical frame.
pub fn static_mfcc(buf: &AudioBuffer) -> Result<Vec<[f64; N_CEPS]>> {
    let n = framing::frame_count(buf.len());
    if n == 0 {
        return Err(Error::TooShort {
            samples: buf.len(),
            needed: FRAME_LEN,
        });
    }
    let filters = mel_filterbank(buf.sample_rate as f64);
    // sparse filter support
    let support: Vec<(usize, usize)> = filters
        .iter()
        .map(|f| {
            let first = f.iter().position(|w| *w > 0.0).unwrap_or(0);
            let last = f.iter().rposition(|w| *w > 0.0).unwrap_or(0);
            (first, last + 1)
        })
        .collect();
    let dct = dct_basis();
    let mut spec = MagnitudeSpectrum::new(FRAME_LEN, N_FFT);
    let mut mag = Vec::with_capacity(spec.bins());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        spec.compute(framing::frame(&buf.samples, i), &mut mag);
        let mut logmel = [0.0; N_MELS];
        for (m, lm) in logmel.iter_mut().enumerate() {
            let (a, b) = support[m];
            let e: f64 = filters[m][a..b]
                .iter()
                .zip(&mag[a..b])
                .map(|(w, x)| w * x)
                .sum();
            *lm = e.max(LOG_FLOOR).ln();
        }
        let mut c = [0.0; N_CEPS];
        for (k, ck) in c.iter_mut().enumerate() {
            *ck = dct[k].iter().zip(&logmel).map(|(d, l)| d * l).sum();
        }
        out.push(c);
    }
    Ok(out)
}

/// Regression delta over +-2 frames with edge replication.
pub fn deltas<const D: usize>(x: &[[f64; D]]) -> Vec<[f64; D]> {
    let n = x.len();
    let at = |i: isize| -> &[f64; D] { &x[i.clamp(0, n as isize - 1) as usize] };
    (0..n as isize)
        .map(|t| {
            let mut d = [0.0; D];
            for (j, dj) in d.iter_mut().enumerate() {
                let mut acc = 0.0;
                for k in 1..=2isize {
                    acc += k as f64 * (at(t + k)[j] - at(t - k)[j]);
                }
                *dj = acc / 10.0;
            }
            d
        })
        .collect()
}

/// 39-dimensional MFCC stack: 13 static + delta + delta-delta.
pub fn compute_mfcc(buf: &AudioBuffer) -> Result<FrameSeries<MfccFrame>> {
    let stat = static_mfcc(buf)?;
    let d1 = deltas(&stat);
    let d2 = deltas(&d1);
    let values = stat
        .iter()
        .zip(&d1)
        .zip(&d2)
        .map(|((s, a), b)| {
            let mut v = [0.0; MFCC_DIM];
            v[..N_CEPS].copy_from_slice(s);
            v[N_CEPS..2 * N_CEPS].copy_from_slice(a);
            v[2 * N_CEPS..].copy_from_slice(b);
            v
        })
        .collect();
    Ok(FrameSeries::canonical(values))
}

/// Shape descriptor used for frame similarity and DTW: c1..c12. c0 only
/// tracks overall level and would otherwise dominate both measures.
pub fn shape(frame: &MfccFrame) -> &[f64] {
    &frame[1..N_CEPS]
}
