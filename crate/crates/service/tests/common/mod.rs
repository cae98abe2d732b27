#![allow(dead_code)]

use dysfluency_core::audio_io::encode_wav;
use dysfluency_core::synthgen::{generate, prolongation_trace};
use dysfluency_core::AudioBuffer;
use dysfluency_service::{SessionManager, DEFAULT_MAX_UPLOAD_BYTES};

/// The 420 ms prolongation at 3.2 syllables per second.
pub fn trace_wav() -> Vec<u8> {
    encode_wav(&generate(&prolongation_trace(0)).unwrap().audio)
}

/// Two 150 ms syllable-like tones, then a 0.5 s steady one: about a
/// second of audio holding one prolongation, cheap to detect in loops.
pub fn short_wav() -> Vec<u8> {
    let mut x = vec![0.0; 1600];
    x.extend(tone(130.0, 0.15));
    x.extend(vec![0.0; 800]);
    x.extend(tone(190.0, 0.15));
    x.extend(vec![0.0; 800]);
    x.extend(tone(150.0, 0.5));
    x.extend(vec![0.0; 1600]);
    wav_of(x)
}

/// Five harmonics with 1/h amplitudes.
fn tone(f0: f64, seconds: f64) -> Vec<f64> {
    let sr = 16_000.0;
    (0..(seconds * sr) as usize)
        .map(|i| {
            let t = i as f64 / sr;
            (1..=5)
                .map(|h| 0.2 / h as f64 * (2.0 * std::f64::consts::PI * f0 * h as f64 * t).sin())
                .sum::<f64>()
        })
        .collect()
}

pub fn wav_of(samples: Vec<f64>) -> Vec<u8> {
    encode_wav(&AudioBuffer::new(samples, 16_000))
}

pub fn manager(dir: &std::path::Path) -> SessionManager {
    SessionManager::open(dir, DEFAULT_MAX_UPLOAD_BYTES).unwrap()
}

use rand::Rng;
use serde_json::{json, Map, Value};

/// A random partial config: one to three fields, about one patch in five
/// carrying an invalid value or an unknown field.
pub fn random_patch(rng: &mut impl Rng) -> Map<String, Value> {
    let mut m = Map::new();
    for _ in 0..rng.gen_range(1..=3) {
        let (k, v) = match rng.gen_range(0..9) {
            0 => ("theta_sim", json!(round(rng.gen_range(0.85..0.99)))),
            1 => ("alpha", json!(round(rng.gen_range(0.8..1.6)))),
            2 => ("theta_dtw", json!(round(rng.gen_range(0.15..0.45)))),
            3 => ("min_cycles", json!(rng.gen_range(1..5))),
            4 => ("hnr_gate_enabled", json!(rng.gen_bool(0.5))),
            5 => ("block_silence_s", json!(round(rng.gen_range(0.25..0.6)))),
            6 => ("theta_sim", json!(round(rng.gen_range(1.0..2.0)))),
            7 => ("min_cycles", json!(0)),
            _ => {
                if rng.gen_bool(0.5) {
                    ("no_such_field", json!(1))
                } else {
                    ("alpha", json!(-1.0))
                }
            }
        };
        m.insert(k.to_string(), v);
    }
    m
}

fn round(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}
