//! Speaking rate from syllable nuclei: peaks of smoothed mid-band energy.

use serde::{Deserialize, Serialize};

use super::dsp::{moving_average, MagnitudeSpectrum};
use crate::audio_io::{AudioBuffer, VadMask};
use crate::config::RuleConfig;
use crate::error::{Error, Result};
use crate::framing::{self, FRAME_LEN, HOP_S};

pub const MIN_RATE: f64 = 0.5;
pub const MAX_RATE: f64 = 8.0;
const N_FFT: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// Syllables per second, clamped to [0.5, 8].
    pub rate: f64,
    /// Frame indices of the detected nuclei.
    pub nuclei: Vec<usize>,
    pub speech_s: f64,
}

/// Mid-band (nuclei band) energy per frame in dB.
pub fn band_energy_db(buf: &AudioBuffer, low_hz: f64, high_hz: f64) -> Vec<f64> {
    let n = framing::frame_count(buf.len());
    let bin_hz = buf.sample_rate as f64 / N_FFT as f64;
    let lo = (low_hz / bin_hz).ceil() as usize;
    let hi = ((high_hz / bin_hz).floor() as usize).min(N_FFT / 2);
    let mut spec = MagnitudeSpectrum::new(FRAME_LEN, N_FFT);
    let mut mag = Vec::new();
    (0..n)
        .map(|i| {
            spec.compute(framing::frame(&buf.samples, i), &mut mag);
            let p: f64 = mag[lo..=hi].iter().map(|m| m * m).sum();
            10.0 * (p + 1e-12).log10()
        })
        .collect()
}

/// Peak prominence as in the usual topographic definition: height above
/// the higher of the two lowest points reached before meeting a higher
/// sample on either side. An equal sample to the left also ends the walk,
/// so a row of equal peaks is prominent only once.
fn prominence(x: &[f64], i: usize) -> f64 {
    let h = x[i];
    let mut left_min = h;
    for j in (0..i).rev() {
        if x[j] >= h {
            break;
        }
        left_min = left_min.min(x[j]);
    }
    let mut right_min = h;
    for &v in &x[i + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Local maxima (plateaus count once, at their left edge) with at least
/// `min_prominence`, thinned greedily by height to `min_distance` frames.
pub fn find_peaks(x: &[f64], min_prominence: f64, min_distance: usize) -> Vec<usize> {
    // rounding noise on a flat stretch must not split it into many peaks
    let x: Vec<f64> = x.iter().map(|v| (v * 1e6).round() / 1e6).collect();
    let x = &x[..];
    let n = x.len();
    let mut cands = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i] > x[i - 1] {
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] && prominence(x, i) >= min_prominence {
                cands.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    let mut by_height = cands.clone();
    by_height.sort_by(|a, b| x[*b].total_cmp(&x[*a]).then(a.cmp(b)));
    let mut kept: Vec<usize> = Vec::new();
    for p in by_height {
        if kept.iter().all(|k| k.abs_diff(p) >= min_distance) {
            kept.push(p);
        }
    }
    kept.sort_unstable();
    kept
}

/// Syllables per second of speech. A nucleus is a prominent peak of the
/// smoothed band energy that falls in a voiced speech frame.
pub fn estimate_speaking_rate(
    buf: &AudioBuffer,
    vad: &VadMask,
    cfg: &RuleConfig,
) -> Result<RateEstimate> {
    let (f0, _) = super::pitch::f0_and_hnr(buf);
    estimate_speaking_rate_with_f0(buf, vad, &f0.values, cfg)
}

/// As [`estimate_speaking_rate`], reusing an F0 track (0 = unvoiced).
pub fn estimate_speaking_rate_with_f0(
    buf: &AudioBuffer,
    vad: &VadMask,
    f0: &[f64],
    cfg: &RuleConfig,
) -> Result<RateEstimate> {
    let speech_s = vad.speech_duration_s();
    if speech_s < cfg.min_speech_s {
        return Err(Error::InsufficientSpeech {
            speech_s,
            needed_s: cfg.min_speech_s,
        });
    }
    let energy = band_energy_db(buf, cfg.nuclei_band_low_hz, cfg.nuclei_band_high_hz);
    let width = (cfg.nuclei_smoothing_s / HOP_S).round().max(1.0) as usize;
    let smooth = moving_average(&energy, width);
    let min_distance = (cfg.nuclei_min_separation_s / HOP_S).round() as usize;
    let nuclei: Vec<usize> = find_peaks(&smooth, cfg.nuclei_prominence_db, min_distance)
        .into_iter()
        .filter(|&i| vad.speech.get(i).copied().unwrap_or(false))
        .filter(|&i| f0.get(i).is_some_and(|f| *f > 0.0))
        .collect();
    let rate = (nuclei.len() as f64 / speech_s).clamp(MIN_RATE, MAX_RATE);
    Ok(RateEstimate {
        rate,
        nuclei,
        speech_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_io::compute_vad;
    use std::f64::consts::PI;

    #[test]
    fn peaks_with_prominence() {
        let x = [0.0, 5.0, 0.0, 1.0, 0.5, 6.0, 6.0, 0.0];
        assert_eq!(find_peaks(&x, 3.0, 1), vec![1, 5]);
        assert_eq!(find_peaks(&x, 0.4, 1), vec![1, 3, 5]);
        // distance thinning keeps the taller
        assert_eq!(find_peaks(&x, 0.4, 3), vec![1, 5]);
    }

    #[test]
    fn steady_tone_clamps_low() {
        // padded so the VAD floor sits on silence rather than on the tone
        let mut x = vec![0.0; 8_000];
        x.extend((0..32_000).map(|i| 0.3 * (2.0 * PI * 500.0 * i as f64 / 16_000.0).sin()));
        x.extend(vec![0.0; 8_000]);
        let buf = AudioBuffer::new(x, 16_000);
        let cfg = RuleConfig::default();
        let vad = compute_vad(&buf, &cfg);
        let est = estimate_speaking_rate(&buf, &vad, &cfg).unwrap();
        assert_eq!(est.rate, MIN_RATE, "{:?}", est);
    }

    #[test]
    fn silence_is_insufficient() {
        let buf = AudioBuffer::new(vec![0.0; 32_000], 16_000);
        let cfg = RuleConfig::default();
        let vad = compute_vad(&buf, &cfg);
        assert!(matches!(
            estimate_speaking_rate(&buf, &vad, &cfg),
            Err(Error::InsufficientSpeech { .. })
        ));
    }

    #[test]
    fn modulated_tone_counts_bursts() {
        // 4 Hz raised-cosine bursts for 3 s
        let x: Vec<f64> = (0..48_000)
            .map(|i| {
                let t = i as f64 / 16_000.0;
                let env = 0.5 - 0.5 * (2.0 * PI * 4.0 * t).cos();
                0.3 * env * (2.0 * PI * 600.0 * t).sin()
            })
            .collect();
        let buf = AudioBuffer::new(x, 16_000);
        let cfg = RuleConfig::default();
        let vad = compute_vad(&buf, &cfg);
        let est = estimate_speaking_rate(&buf, &vad, &cfg).unwrap();
        assert!((est.rate - 4.0).abs() <= 0.5, "{est:?}");
    }
}
