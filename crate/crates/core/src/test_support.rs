//! Signal builders shared by unit tests.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio_io::{compute_vad, AudioBuffer};
use crate::config::RuleConfig;
use crate::features::{extract, FeatureSet};

pub const SR: f64 = 16_000.0;

fn samples(secs: f64) -> usize {
    (secs * SR).round() as usize
}

pub fn silence(secs: f64) -> Vec<f64> {
    vec![0.0; samples(secs)]
}

pub fn sine(freq: f64, secs: f64, amp: f64) -> Vec<f64> {
    (0..samples(secs))
        .map(|i| amp * (2.0 * PI * freq * i as f64 / SR).sin())
        .collect()
}

/// Sawtooth-like harmonic series (1/k amplitudes up to 4 kHz), peak-scaled to `amp`.
pub fn harmonic(f0: f64, secs: f64, amp: f64) -> Vec<f64> {
    let k_max = (4000.0 / f0) as usize;
    let mut x: Vec<f64> = (0..samples(secs))
        .map(|i| {
            let t = i as f64 / SR;
            (1..=k_max)
                .map(|k| (2.0 * PI * f0 * k as f64 * t).sin() / k as f64)
                .sum()
        })
        .collect();
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    x.iter_mut().for_each(|v| *v *= amp / peak);
    x
}

pub fn noise(secs: f64, amp: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples(secs))
        .map(|_| amp * rng.gen_range(-1.0..1.0))
        .collect()
}

/// First-difference filtered noise: energy concentrated at high frequencies.
pub fn highpass_noise(secs: f64, amp: f64, seed: u64) -> Vec<f64> {
    let n = noise(secs, 1.0, seed);
    let mut prev = 0.0;
    n.iter()
        .map(|v| {
            let y = 0.5 * (v - prev);
            prev = *v;
            amp * y
        })
        .collect()
}

pub fn features_of(x: &[f64]) -> FeatureSet {
    let cfg = RuleConfig::default();
    let buf = AudioBuffer::new(x.to_vec(), 16_000);
    let vad = compute_vad(&buf, &cfg);
    extract(&buf, &vad, &cfg).expect("features")
}
