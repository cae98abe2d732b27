//! F0 and HNR from the normalized cross-correlation function (NCCF).
//!
//! Each frame's 400-sample window is correlated against the signal starting
//! at every lag in the 50-400 Hz period range; the lagged segment runs past
//! the frame so every lag sees a full window. The best peak above the
//! voicing threshold gives F0 (after parabolic refinement) and its height
//! gives the harmonic-to-noise ratio.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::dsp::{median3, parabolic_peak};
use super::FrameSeries;
use crate::audio_io::AudioBuffer;
use crate::framing::{self, FRAME_LEN, HOP_LEN};

pub const F0_MIN_HZ: f64 = 50.0;
pub const F0_MAX_HZ: f64 = 400.0;
pub const VOICING_THRESHOLD: f64 = 0.3;
pub const HNR_FLOOR_DB: f64 = -10.0;
pub const HNR_CEIL_DB: f64 = 40.0;
/// Earliest peak within this fraction of the global maximum wins, which
/// keeps period multiples from being chosen.
const OCTAVE_RATIO: f64 = 0.9;
const MIN_FRAME_ENERGY: f64 = 1e-10;

/// Per-frame raw pitch analysis before smoothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchFrame {
    /// Hz, 0 when unvoiced.
    pub f0: f64,
    /// NCCF height at the chosen lag (0 when unvoiced and no peak).
    pub strength: f64,
}

struct Nccf {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    a: Vec<Complex<f64>>,
    b: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
    min_lag: usize,
    max_lag: usize,
}

impl Nccf {
    fn new(sample_rate: f64) -> Self {
        let min_lag = (sample_rate / F0_MAX_HZ).floor() as usize;
        let max_lag = (sample_rate / F0_MIN_HZ).ceil() as usize;
        let len = (FRAME_LEN + max_lag + 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Self {
            fwd,
            inv,
            a: vec![Complex::default(); len],
            b: vec![Complex::default(); len],
            scratch: vec![Complex::default(); scratch_len],
            min_lag,
            max_lag,
        }
    }

    /// NCCF at lags `0..=max_lag` for the frame starting at `start`.
    fn compute(&mut self, x: &[f64], start: usize, out: &mut Vec<f64>) -> f64 {
        let len = self.a.len();
        let seg_end = (start + FRAME_LEN + self.max_lag).min(x.len());
        let seg = &x[start..seg_end];
        for (i, slot) in self.a.iter_mut().enumerate() {
            *slot = Complex::new(if i < FRAME_LEN { seg[i] } else { 0.0 }, 0.0);
        }
        for (i, slot) in self.b.iter_mut().enumerate() {
            *slot = Complex::new(seg.get(i).copied().unwrap_or(0.0), 0.0);
        }
        self.fwd
            .process_with_scratch(&mut self.a, &mut self.scratch);
        self.fwd
            .process_with_scratch(&mut self.b, &mut self.scratch);
        for (a, b) in self.a.iter_mut().zip(&self.b) {
            *a = a.conj() * b;
        }
        self.inv
            .process_with_scratch(&mut self.a, &mut self.scratch);

        let e0: f64 = seg[..FRAME_LEN].iter().map(|v| v * v).sum();
        // energy of the lagged window, sliding
        let sq = |i: usize| seg.get(i).map_or(0.0, |v| v * v);
        let mut e_lag = e0;
        out.clear();
        for lag in 0..=self.max_lag {
            if lag > 0 {
                e_lag += sq(lag + FRAME_LEN - 1) - sq(lag - 1);
            }
            let r = self.a[lag].re / len as f64;
            let denom = (e0 * e_lag.max(0.0)).sqrt();
            out.push(if denom > 1e-20 { r / denom } else { 0.0 });
        }
        e0
    }
}

/// Raw NCCF pitch per canonical frame.
pub fn analyze(buf: &AudioBuffer) -> Vec<PitchFrame> {
    let n = framing::frame_count(buf.len());
    let sr = buf.sample_rate as f64;
    let mut nccf = Nccf::new(sr);
    let mut r = Vec::with_capacity(nccf.max_lag + 1);
    (0..n)
        .map(|i| {
            let e0 = nccf.compute(&buf.samples, i * HOP_LEN, &mut r);
            if e0 < MIN_FRAME_ENERGY {
                return PitchFrame {
                    f0: 0.0,
                    strength: 0.0,
                };
            }
            pick_peak(&r, nccf.min_lag, nccf.max_lag, sr)
        })
        .collect()
}

fn pick_peak(r: &[f64], min_lag: usize, max_lag: usize, sr: f64) -> PitchFrame {
    let hi = max_lag.min(r.len() - 2);
    let peaks: Vec<usize> = (min_lag.max(1)..=hi)
        .filter(|&k| r[k] > r[k - 1] && r[k] >= r[k + 1])
        .collect();
    let Some(best) = peaks.iter().map(|&k| r[k]).reduce(f64::max) else {
        return PitchFrame {
            f0: 0.0,
            strength: 0.0,
        };
    };
    if best < VOICING_THRESHOLD {
        return PitchFrame {
            f0: 0.0,
            strength: best.max(0.0),
        };
    }
    let k = peaks
        .into_iter()
        .find(|&k| r[k] >= OCTAVE_RATIO * best)
        .expect("best peak qualifies");
    let (delta, height) = parabolic_peak(r[k - 1], r[k], r[k + 1]);
    let f0 = sr / (k as f64 + delta);
    if !(F0_MIN_HZ..=F0_MAX_HZ).contains(&f0) {
        return PitchFrame {
            f0: 0.0,
            strength: height.clamp(0.0, 1.0),
        };
    }
    PitchFrame {
        f0,
        strength: height.clamp(0.0, 1.0),
    }
}

/// 3-frame median smoothing of a raw F0 track.
pub fn smooth_f0(raw: &[f64]) -> Vec<f64> {
    let n = raw.len();
    (0..n)
        .map(|i| {
            if n < 3 {
                return raw[i];
            }
            let a = raw[i.saturating_sub(1)];
            let c = raw[(i + 1).min(n - 1)];
            let m = median3(a, raw[i], c);
            if m > 0.0 && !(F0_MIN_HZ..=F0_MAX_HZ).contains(&m) {
                0.0
            } else {
                m
            }
        })
        .collect()
}

pub fn hnr_db(strength: f64) -> f64 {
    let r = strength.clamp(0.0, 1.0 - 1e-12);
    if r <= 0.0 {
        return HNR_FLOOR_DB;
    }
    (10.0 * (r / (1.0 - r)).log10()).clamp(HNR_FLOOR_DB, HNR_CEIL_DB)
}

/// Smoothed F0 track and the matching HNR track from one pitch pass.
pub fn f0_and_hnr(buf: &AudioBuffer) -> (FrameSeries, FrameSeries) {
    let raw = analyze(buf);
    let f0 = smooth_f0(&raw.iter().map(|p| p.f0).collect::<Vec<_>>());
    let hnr = raw
        .iter()
        .zip(&f0)
        .map(|(p, f)| {
            if *f > 0.0 {
                hnr_db(p.strength)
            } else {
                HNR_FLOOR_DB
            }
        })
        .collect();
    (FrameSeries::canonical(f0), FrameSeries::canonical(hnr))
}

pub fn compute_f0(buf: &AudioBuffer) -> FrameSeries {
    f0_and_hnr(buf).0
}

pub fn compute_hnr(buf: &AudioBuffer) -> FrameSeries {
    f0_and_hnr(buf).1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sine(freq: f64, secs: f64) -> AudioBuffer {
        let n = (secs * 16_000.0) as usize;
        AudioBuffer::new(
            (0..n)
                .map(|i| 0.3 * (2.0 * PI * freq * i as f64 / 16_000.0).sin())
                .collect(),
            16_000,
        )
    }

    fn noise(seed: u64, secs: f64) -> AudioBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (secs * 16_000.0) as usize;
        AudioBuffer::new((0..n).map(|_| rng.gen_range(-0.3..0.3)).collect(), 16_000)
    }

    /// Brute-force oracle: direct normalized autocorrelation of the frame,
    /// integer lag only.
    fn oracle_period(x: &[f64], start: usize) -> usize {
        let w = &x[start..start + FRAME_LEN];
        let mut best = (0, f64::MIN);
        for lag in 40..=320 {
            let v = &x[start + lag..start + lag + FRAME_LEN];
            let num: f64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
            let den = (w.iter().map(|a| a * a).sum::<f64>() * v.iter().map(|b| b * b).sum::<f64>())
                .sqrt();
            let r = num / den;
            if r > best.1 + 1e-9 {
                best = (lag, r);
            }
        }
        best.0
    }

    #[test]
    fn sine_200_hz() {
        let buf = sine(200.0, 0.5);
        let f0 = compute_f0(&buf);
        let interior = &f0.values[2..f0.len() - 25];
        assert!(
            interior.iter().all(|f| (f - 200.0).abs() <= 2.0),
            "{interior:?}"
        );
        // oracle agrees on the integer period
        assert_eq!(oracle_period(&buf.samples, 1600), 80);
    }

    #[test]
    fn tones_within_two_percent() {
        for freq in [60.0, 100.0, 200.0, 350.0] {
            let f0 = compute_f0(&sine(freq, 0.6));
            for f in &f0.values[2..f0.len() - 25] {
                assert!((f - freq).abs() <= 0.02 * freq, "{freq}: {f}");
            }
        }
    }

    #[test]
    fn white_noise_mostly_unvoiced() {
        let f0 = compute_f0(&noise(11, 1.0));
        let unvoiced = f0.values.iter().filter(|f| **f == 0.0).count();
        assert!(
            unvoiced as f64 >= 0.9 * f0.len() as f64,
            "{unvoiced}/{}",
            f0.len()
        );
    }

    #[test]
    fn silence_unvoiced() {
        let buf = AudioBuffer::new(vec![0.0; 8000], 16_000);
        let (f0, hnr) = f0_and_hnr(&buf);
        assert!(f0.values.iter().all(|f| *f == 0.0));
        assert!(hnr.values.iter().all(|h| *h == HNR_FLOOR_DB));
    }

    #[test]
    fn hnr_sine_and_noise() {
        let hnr = compute_hnr(&sine(200.0, 0.5));
        assert!(hnr.values[2..hnr.len() - 25].iter().all(|h| *h >= 20.0));
        let hnr = compute_hnr(&noise(5, 1.0));
        let low = hnr.values.iter().filter(|h| **h <= 0.0).count();
        assert!(low as f64 > 0.8 * hnr.len() as f64);
    }

    #[test]
    fn f0_range_invariant() {
        let f0 = compute_f0(&noise(3, 0.5));
        assert!(f0
            .values
            .iter()
            .all(|f| *f == 0.0 || (F0_MIN_HZ..=F0_MAX_HZ).contains(f)));
    }

    #[test]
    fn hnr_formula() {
        assert!((hnr_db(0.5) - 0.0).abs() < 1e-12);
        assert!((hnr_db(0.9) - 10.0 * 9f64.log10()).abs() < 1e-12);
        assert_eq!(hnr_db(0.0), HNR_FLOOR_DB);
        assert_eq!(hnr_db(1.0), HNR_CEIL_DB);
    }
}
