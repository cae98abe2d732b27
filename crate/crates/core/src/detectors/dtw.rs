//! Dynamic time warping with path-length normalization.

use crate::features::mfcc::{shape, MfccFrame};
use crate::features::FeatureSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    /// Sum of local costs along the optimal path.
    pub total: f64,
    /// Number of cells on that path.
    pub path_len: usize,
}

impl Alignment {
    pub fn normalized(&self) -> f64 {
        self.total / self.path_len as f64
    }
}

/// Full DTW over an `n x m` grid with steps (1,0), (0,1), (1,1). Among
/// paths of equal total cost the shorter one is kept.
pub fn dtw(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Option<Alignment> {
    if n == 0 || m == 0 {
        return None;
    }
    let mut prev: Vec<(f64, usize)> = vec![(f64::INFINITY, 0); m];
    let mut cur: Vec<(f64, usize)> = vec![(f64::INFINITY, 0); m];
    for i in 0..n {
        for j in 0..m {
            let d = cost(i, j);
            cur[j] = if i == 0 && j == 0 {
                (d, 1)
            } else {
                let mut best = (f64::INFINITY, usize::MAX);
                let mut consider = |c: (f64, usize)| {
                    let cand = (d + c.0, c.1 + 1);
                    if cand.0 < best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                        best = cand;
                    }
                };
                if i > 0 && j > 0 {
                    consider(prev[j - 1]);
                }
                if i > 0 {
                    consider(prev[j]);
                }
                if j > 0 {
                    consider(cur[j - 1]);
                }
                best
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (total, path_len) = prev[m - 1];
    Some(Alignment { total, path_len })
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Normalized DTW cost between two frame ranges of the MFCC shape
/// coefficients. Local costs are Euclidean distances divided by the mean
/// frame norm of the non-silent frames; a silent frame costs exactly 1
/// against anything, so silence never matches silence.
pub fn segment_cost(fs: &FeatureSet, a: std::ops::Range<usize>, b: std::ops::Range<usize>) -> f64 {
    let frames = &fs.mfcc.values;
    let sa: Vec<bool> = a.clone().map(|i| fs.is_silent(i)).collect();
    let sb: Vec<bool> = b.clone().map(|i| fs.is_silent(i)).collect();
    let fa: Vec<&MfccFrame> = a.clone().map(|i| &frames[i]).collect();
    let fb: Vec<&MfccFrame> = b.clone().map(|i| &frames[i]).collect();
    shape_cost(&fa, &sa, &fb, &sb)
}

pub fn shape_cost(fa: &[&MfccFrame], sa: &[bool], fb: &[&MfccFrame], sb: &[bool]) -> f64 {
    let norms: Vec<f64> = fa
        .iter()
        .zip(sa)
        .chain(fb.iter().zip(sb))
        .filter(|(_, s)| !**s)
        .map(|(f, _)| shape(f).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if norms.is_empty() {
        return 1.0;
    }
    let scale = (norms.iter().sum::<f64>() / norms.len() as f64).max(1e-12);
    dtw(fa.len(), fb.len(), |i, j| {
        if sa[i] || sb[j] {
            1.0
        } else {
            euclidean(shape(fa[i]), shape(fb[j])) / scale
        }
    })
    .map_or(1.0, |al| al.normalized())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive oracle: every monotone path from (0,0) to (n-1,m-1),
    /// minimum total, ties to the shorter path.
    fn brute(a: &[Vec<f64>], b: &[Vec<f64>]) -> (f64, usize) {
        fn walk(
            a: &[Vec<f64>],
            b: &[Vec<f64>],
            i: usize,
            j: usize,
            acc: f64,
            len: usize,
            best: &mut (f64, usize),
        ) {
            let acc = acc + euclidean(&a[i], &b[j]);
            let len = len + 1;
            if i == a.len() - 1 && j == b.len() - 1 {
                if acc < best.0 || (acc == best.0 && len < best.1) {
                    *best = (acc, len);
                }
                return;
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                walk(a, b, i + 1, j + 1, acc, len, best);
            }
            if i + 1 < a.len() {
                walk(a, b, i + 1, j, acc, len, best);
            }
            if j + 1 < b.len() {
                walk(a, b, i, j + 1, acc, len, best);
            }
        }
        let mut best = (f64::INFINITY, usize::MAX);
        // the first cell is added to 0.0, matching the DP's base case
        walk(a, b, 0, 0, 0.0, 0, &mut best);
        best
    }

    fn random_seq(rng: &mut ChaCha8Rng, len: usize) -> Vec<Vec<f64>> {
        (0..len)
            .map(|_| (0..12).map(|_| rng.gen_range(-10.0..10.0)).collect())
            .collect()
    }

    #[test]
    fn matches_brute_force_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let n = rng.gen_range(1..=6);
            let m = rng.gen_range(1..=6);
            let a = random_seq(&mut rng, n);
            let b = random_seq(&mut rng, m);
            let got = dtw(n, m, |i, j| euclidean(&a[i], &b[j])).unwrap();
            let (total, len) = brute(&a, &b);
            assert_eq!(got.total, total);
            assert_eq!(got.path_len, len);
        }
    }

    #[test]
    fn identity_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_seq(&mut rng, 10);
        let b = random_seq(&mut rng, 8);
        let aa = dtw(10, 10, |i, j| euclidean(&a[i], &a[j])).unwrap();
        assert_eq!(aa.total, 0.0);
        assert_eq!(aa.path_len, 10);
        let ab = dtw(10, 8, |i, j| euclidean(&a[i], &b[j])).unwrap();
        let ba = dtw(8, 10, |i, j| euclidean(&b[i], &a[j])).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn empty_input() {
        assert!(dtw(0, 3, |_, _| 0.0).is_none());
    }

    #[test]
    fn silent_frames_cost_one() {
        let f = [0.0; crate::features::mfcc::MFCC_DIM];
        let a = vec![&f; 5];
        let silent = vec![true; 5];
        assert_eq!(shape_cost(&a, &silent, &a, &silent), 1.0);
    }
}
