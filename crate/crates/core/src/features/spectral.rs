//! Spectral centroid, spread and flux on 2048-point spectra of the
//! canonical frames.

use super::dsp::MagnitudeSpectrum;
use super::FrameSeries;
use crate::audio_io::AudioBuffer;
use crate::framing::{self, FRAME_LEN};

pub const N_FFT: usize = 2048;
const SILENT_POWER: f64 = 1e-20;

pub struct SpectralTracks {
    pub centroid: FrameSeries,
    pub spread: FrameSeries,
    pub flux: FrameSeries,
}

/// Centroid and spread are magnitude-weighted mean and standard deviation
/// of frequency. Flux is the L2 norm of the rectified magnitude increase
/// from the previous frame divided by the current frame's L2 magnitude, so
/// it lies in [0, 1]; it is 0 for a silent frame and for frame 0.
pub fn compute_spectral(buf: &AudioBuffer) -> SpectralTracks {
    let n = framing::frame_count(buf.len());
    let bin_hz = buf.sample_rate as f64 / N_FFT as f64;
    let mut spec = MagnitudeSpectrum::new(FRAME_LEN, N_FFT);
    let mut prev: Vec<f64> = vec![0.0; spec.bins()];
    let mut cur = Vec::with_capacity(spec.bins());
    let mut centroid = Vec::with_capacity(n);
    let mut spread = Vec::with_capacity(n);
    let mut flux = Vec::with_capacity(n);
    for i in 0..n {
        spec.compute(framing::frame(&buf.samples, i), &mut cur);
        let total: f64 = cur.iter().sum();
        let power: f64 = cur.iter().map(|m| m * m).sum();
        if power < SILENT_POWER {
            centroid.push(0.0);
            spread.push(0.0);
            flux.push(0.0);
        } else {
            let c = cur
                .iter()
                .enumerate()
                .map(|(k, m)| k as f64 * bin_hz * m)
                .sum::<f64>()
                / total;
            let var = cur
                .iter()
                .enumerate()
                .map(|(k, m)| {
                    let d = k as f64 * bin_hz - c;
                    d * d * m
                })
                .sum::<f64>()
                / total;
            centroid.push(c);
            spread.push(var.sqrt());
            if i == 0 {
                flux.push(0.0);
            } else {
                let rise: f64 = cur
                    .iter()
                    .zip(&prev)
                    .map(|(a, b)| {
                        let d = (a - b).max(0.0);
                        d * d
                    })
                    .sum();
                flux.push((rise / power).sqrt());
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    SpectralTracks {
        centroid: FrameSeries::canonical(centroid),
        spread: FrameSeries::canonical(spread),
        flux: FrameSeries::canonical(flux),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, secs: f64) -> Vec<f64> {
        let n = (secs * 16_000.0) as usize;
        (0..n)
            .map(|i| 0.3 * (2.0 * PI * freq * i as f64 / 16_000.0).sin())
            .collect()
    }

    #[test]
    fn one_khz_centroid() {
        let t = compute_spectral(&AudioBuffer::new(sine(1000.0, 0.3), 16_000));
        for (c, s) in t.centroid.values.iter().zip(&t.spread.values) {
            assert!((c - 1000.0).abs() <= 20.0, "{c}");
            assert!(*s < 100.0, "{s}");
        }
    }

    #[test]
    fn stationary_flux_low() {
        let t = compute_spectral(&AudioBuffer::new(sine(440.0, 0.5), 16_000));
        assert!(t.flux.values[1..].iter().all(|f| *f < 0.05));
    }

    #[test]
    fn onset_is_flux_maximum() {
        let mut x = vec![0.0; 4000];
        x.extend(sine(440.0, 0.3));
        let t = compute_spectral(&AudioBuffer::new(x, 16_000));
        let (argmax, max) = t
            .flux
            .values
            .iter()
            .enumerate()
            .fold(
                (0, f64::MIN),
                |b, (i, v)| if *v > b.1 { (i, *v) } else { b },
            );
        // first frame reaching into the tone
        let onset = (4000 - FRAME_LEN) / 160 + 1;
        assert_eq!(argmax, onset);
        assert!((max - 1.0).abs() < 1e-9);
    }

    #[test]
    fn silence_is_zero() {
        let t = compute_spectral(&AudioBuffer::new(vec![0.0; 4000], 16_000));
        assert!(t.centroid.values.iter().all(|v| *v == 0.0));
        assert!(t.flux.values.iter().all(|v| *v == 0.0));
    }
}
