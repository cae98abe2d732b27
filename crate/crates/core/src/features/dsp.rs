use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Symmetric Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Windowed, zero-padded real FFT producing one-sided magnitudes.
pub struct MagnitudeSpectrum {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl MagnitudeSpectrum {
    pub fn new(frame_len: usize, fft_len: usize) -> Self {
        assert!(fft_len >= frame_len);
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        Self {
            fft,
            window: hann(frame_len),
            buf: vec![Complex::default(); fft_len],
            scratch,
        }
    }

    pub fn fft_len(&self) -> usize {
        self.buf.len()
    }

    pub fn bins(&self) -> usize {
        self.buf.len() / 2 + 1
    }

    /// Magnitudes of bins `0..=fft_len/2` into `out`.
    pub fn compute(&mut self, frame: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(frame.len(), self.window.len());
        for (slot, (x, w)) in self.buf.iter_mut().zip(frame.iter().zip(&self.window)) {
            *slot = Complex::new(x * w, 0.0);
        }
        for slot in &mut self.buf[frame.len()..] {
            *slot = Complex::default();
        }
        self.fft
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        out.clear();
        out.extend(self.buf[..self.bins()].iter().map(|c| c.norm()));
    }
}

/// Median of three.
pub fn median3(a: f64, b: f64, c: f64) -> f64 {
    a.max(b).min(a.min(b).max(c))
}

/// Centered moving average; the window shrinks at the edges.
pub fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    if width <= 1 || x.is_empty() {
        return x.to_vec();
    }
    let half = width / 2;
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + width - half).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Pearson correlation; 0 when either side has no variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return 0.0;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a[..n].iter().zip(&b[..n]) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 1e-18 || sbb <= 1e-18 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Biased autocorrelation of `x` at lags `0..=max_lag`, normalized so lag 0
/// is 1. Returns `None` when `x` has no variance.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Option<Vec<f64>> {
    let n = x.len();
    if n == 0 {
        return None;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let r0: f64 = d.iter().map(|v| v * v).sum();
    if r0 <= 1e-18 * n as f64 {
        return None;
    }
    Some(
        (0..=max_lag.min(n - 1))
            .map(|lag| {
                d[..n - lag]
                    .iter()
                    .zip(&d[lag..])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / r0
            })
            .collect(),
    )
}

/// Sub-sample offset of a peak from its two neighbours, in [-0.5, 0.5],
/// plus the interpolated height.
pub fn parabolic_peak(left: f64, center: f64, right: f64) -> (f64, f64) {
    let denom = left - 2.0 * center + right;
    if denom.abs() < 1e-18 {
        return (0.0, center);
    }
    let delta = (0.5 * (left - right) / denom).clamp(-0.5, 0.5);
    (delta, center - 0.25 * (left - right) * delta)
}
