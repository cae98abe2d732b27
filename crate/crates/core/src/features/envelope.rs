//! Sample-rate amplitude envelope: magnitude of the analytic signal,
//! smoothed by a zero-phase Gaussian low-pass with its -3 dB point at 30 Hz.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio_io::AudioBuffer;

pub const SMOOTHING_CUTOFF_HZ: f64 = 30.0;
/// Mirror padding on each side before smoothing, in seconds.
const EDGE_PAD_S: f64 = 0.1;

pub fn compute_envelope(buf: &AudioBuffer) -> Vec<f64> {
    let n = buf.len();
    if n == 0 {
        return Vec::new();
    }
    if buf.samples.iter().all(|x| *x == 0.0) {
        return vec![0.0; n];
    }
    // Inverse transforms run the forward plan on conjugated input: only the
    // real part and the modulus are read afterwards, and both survive the
    // missing output conjugation. One cached plan instead of two matters at
    // a million points.
    let mut planner = FftPlanner::<f64>::new();

    // analytic signal
    let len = n.next_power_of_two();
    let fft = planner.plan_fft_forward(len);
    let mut z: Vec<Complex<f64>> = buf
        .samples
        .iter()
        .map(|x| Complex::new(*x, 0.0))
        .chain(std::iter::repeat(Complex::default()))
        .take(len)
        .collect();
    fft.process(&mut z);
    let half = len / 2;
    for (k, c) in z.iter_mut().enumerate() {
        if k == 0 || k == half {
            *c = c.conj();
        } else if k < half {
            *c = c.conj() * 2.0;
        } else {
            *c = Complex::default();
        }
    }
    fft.process(&mut z);
    let magnitude: Vec<f64> = z[..n].iter().map(|c| c.norm() / len as f64).collect();
    drop(z);

    // mirror-pad, smooth in the frequency domain, crop
    let pad = ((EDGE_PAD_S * buf.sample_rate as f64) as usize).min(n - 1);
    let total = n + 2 * pad;
    let len2 = total.next_power_of_two();
    let fft = if len2 == len {
        fft
    } else {
        planner.plan_fft_forward(len2)
    };
    let mut spec: Vec<Complex<f64>> = magnitude[1..=pad]
        .iter()
        .rev()
        .chain(&magnitude)
        .chain(magnitude[n - 1 - pad..n - 1].iter().rev())
        .map(|x| Complex::new(*x, 0.0))
        .chain(std::iter::repeat(Complex::default()))
        .take(len2)
        .collect();
    drop(magnitude);
    fft.process(&mut spec);
    let df = buf.sample_rate as f64 / len2 as f64;
    let k = std::f64::consts::LN_2 / 2.0 / (SMOOTHING_CUTOFF_HZ * SMOOTHING_CUTOFF_HZ);
    for (i, c) in spec.iter_mut().enumerate() {
        let bin = if i <= len2 / 2 { i } else { len2 - i };
        let f = bin as f64 * df;
        *c = c.conj() * ((-k * f * f).exp() / len2 as f64);
    }
    fft.process(&mut spec);
    spec[pad..pad + n].iter().map(|c| c.re.max(0.0)).collect()
}
