//! The one framing contract shared by every module: 16 kHz audio,
//! 25 ms windows, 10 ms hop, final partial frame dropped.

pub const SAMPLE_RATE: u32 = 16_000;
pub const FRAME_LEN: usize = 400;
pub const HOP_LEN: usize = 160;
pub const HOP_S: f64 = HOP_LEN as f64 / SAMPLE_RATE as f64;
pub const WINDOW_S: f64 = FRAME_LEN as f64 / SAMPLE_RATE as f64;

/// Number of complete frames in `n` samples.
pub fn frame_count(n: usize) -> usize {
    if n < FRAME_LEN {
        0
    } else {
        (n - FRAME_LEN) / HOP_LEN + 1
    }
}

/// Center time of frame `i`.
pub fn frame_center(i: usize) -> f64 {
    WINDOW_S / 2.0 + i as f64 * HOP_S
}

/// Time span covered by frames `first..=last`, one hop per frame centered on
/// the frame centers.
pub fn frames_to_span(first: usize, last: usize) -> (f64, f64) {
    (
        frame_center(first) - HOP_S / 2.0,
        frame_center(last) + HOP_S / 2.0,
    )
}

/// Stretch of signal covered by the analysis windows of frames
/// `first..=last`.
pub fn frames_extent(first: usize, last: usize) -> (f64, f64) {
    (first as f64 * HOP_S, last as f64 * HOP_S + WINDOW_S)
}

/// Index of the frame whose center is nearest to `t`, clamped to `[0, n)`.
pub fn time_to_frame(t: f64, n: usize) -> usize {
    let i = ((t - WINDOW_S / 2.0) / HOP_S).round();
    if i <= 0.0 || n == 0 {
        0
    } else {
        (i as usize).min(n - 1)
    }
}

pub fn frame(samples: &[f64], i: usize) -> &[f64] {
    &samples[i * HOP_LEN..i * HOP_LEN + FRAME_LEN]
}

/// Frame RMS level in dBFS, floored at -120 dB.
pub fn frame_energy_db(frame: &[f64]) -> f64 {
    let ms = frame.iter().map(|x| x * x).sum::<f64>() / frame.len().max(1) as f64;
    10.0 * (ms + 1e-12).log10()
}
