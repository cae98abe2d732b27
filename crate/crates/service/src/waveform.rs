//! Min/max downsampling for waveform display.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub min: f64,
    pub max: f64,
}

/// Split `samples` into `points` contiguous buckets of near-equal size and
/// return each bucket's extremes. Bucket `b` covers
/// `[b*n/points, (b+1)*n/points)`. Asking for more points than samples
/// yields one pair per sample.
pub fn peaks(samples: &[f64], points: usize) -> Vec<Peak> {
    let n = samples.len();
    let points = points.min(n);
    (0..points)
        .map(|b| {
            let lo = b * n / points;
            let hi = ((b + 1) * n / points).max(lo + 1);
            let bucket = &samples[lo..hi];
            Peak {
                min: bucket.iter().copied().fold(f64::INFINITY, f64::min),
                max: bucket.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}
