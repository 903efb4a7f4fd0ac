//! Reference implementations used as oracles. Deliberately naive: no bands
//! stored, no pruning, no shared code with the library beyond plain types.
#![allow(dead_code)]

use pose_dtw::keypoints::{BODY_JOINT_COUNT, FEATURE_DIM};
use pose_dtw::{KeypointFrame, PoseSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Euclidean distance over the 24 coordinates, joint by joint.
pub fn ref_frame_distance(a: &KeypointFrame, b: &KeypointFrame) -> f64 {
    let mut acc = 0.0;
    for j in 0..BODY_JOINT_COUNT {
        let dx = a.coords()[j][0] - b.coords()[j][0];
        let dy = a.coords()[j][1] - b.coords()[j][1];
        acc += dx * dx + dy * dy;
    }
    acc.sqrt()
}

/// Band membership restated from scratch (1-based cells).
pub fn ref_in_band(x: usize, y: usize, m: usize, n: usize, w: Option<usize>) -> bool {
    match w {
        None => true,
        Some(w) => {
            let lhs = y as i128 * m as i128 - n as i128 * x as i128;
            lhs.abs() <= w as i128 * m as i128
        }
    }
}

/// Minimum cost over every monotone path, found by explicit enumeration.
/// Exponential; only for tiny inputs.
pub fn enumerate_paths<F: Fn(usize, usize) -> f64>(m: usize, n: usize, w: Option<usize>, cost: &F) -> f64 {
    struct Walk<'a, F> {
        m: usize,
        n: usize,
        w: Option<usize>,
        cost: &'a F,
        best: f64,
    }
    impl<F: Fn(usize, usize) -> f64> Walk<'_, F> {
        fn step(&mut self, x: usize, y: usize, acc: f64) {
            if !ref_in_band(x, y, self.m, self.n, self.w) {
                return;
            }
            let acc = acc + (self.cost)(x, y);
            if (x, y) == (self.m, self.n) {
                self.best = self.best.min(acc);
                return;
            }
            if x < self.m && y < self.n {
                self.step(x + 1, y + 1, acc);
            }
            if x < self.m {
                self.step(x + 1, y, acc);
            }
            if y < self.n {
                self.step(x, y + 1, acc);
            }
        }
    }
    let mut walk = Walk { m, n, w, cost, best: f64::INFINITY };
    walk.step(1, 1, 0.0);
    walk.best
}

/// Full-matrix DTW with no pruning; `inf` when no path fits the band.
pub fn naive_dtw<F: Fn(usize, usize) -> f64>(m: usize, n: usize, w: Option<usize>, cost: &F) -> f64 {
    let mut d = vec![vec![f64::INFINITY; n + 1]; m + 1];
    d[0][0] = 0.0;
    for x in 1..=m {
        for y in 1..=n {
            if ref_in_band(x, y, m, n, w) {
                let best = d[x - 1][y - 1].min(d[x - 1][y]).min(d[x][y - 1]);
                d[x][y] = cost(x, y) + best;
            }
        }
    }
    d[m][n]
}

pub fn naive_seq_dtw(a: &PoseSequence, b: &PoseSequence, w: Option<usize>) -> f64 {
    let (fa, fb) = (a.frames(), b.frames());
    naive_dtw(fa.len(), fb.len(), w, &|x, y| ref_frame_distance(&fa[x - 1], &fb[y - 1]))
}

pub fn grid_out_of_band(m: usize, n: usize, w: usize) -> u64 {
    let mut c = 0;
    for x in 1..=m {
        for y in 1..=n {
            if !ref_in_band(x, y, m, n, Some(w)) {
                c += 1;
            }
        }
    }
    c
}

/// LB_Kim restated: largest gap among first, last, max and min of the norms.
pub fn ref_lb_kim(a: &PoseSequence, b: &PoseSequence) -> f64 {
    let norms = |s: &PoseSequence| -> Vec<f64> {
        s.frames()
            .iter()
            .map(|f| f.coords().iter().map(|c| c[0] * c[0] + c[1] * c[1]).sum::<f64>().sqrt())
            .collect()
    };
    let (na, nb) = (norms(a), norms(b));
    let stats = |v: &[f64]| {
        [
            v[0],
            v[v.len() - 1],
            v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            v.iter().cloned().fold(f64::INFINITY, f64::min),
        ]
    };
    let (sa, sb) = (stats(&na), stats(&nb));
    (0..4).map(|i| (sa[i] - sb[i]).abs()).fold(0.0, f64::max)
}

pub fn random_frame(rng: &mut ChaCha8Rng, spread: f64, idx: u64) -> KeypointFrame {
    let flat: Vec<f64> = (0..FEATURE_DIM).map(|_| rng.random_range(-spread..spread)).collect();
    KeypointFrame::from_flat(&flat, idx).unwrap()
}

pub fn random_sequence(rng: &mut ChaCha8Rng, id: &str, len: usize, spread: f64) -> PoseSequence {
    let frames = (0..len as u64).map(|t| random_frame(rng, spread, t)).collect();
    PoseSequence::new(id, "cam0", "c0", frames, 1).unwrap()
}

/// A random walk; neighbouring frames stay close, which makes small
/// DTW distances (and therefore surviving matches) common.
pub fn random_walk(rng: &mut ChaCha8Rng, id: &str, cond: &str, len: usize, step: f64) -> PoseSequence {
    let mut cur: Vec<f64> = (0..FEATURE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
    let frames = (0..len as u64)
        .map(|t| {
            for v in cur.iter_mut() {
                *v += rng.random_range(-step..step);
            }
            KeypointFrame::from_flat(&cur, t).unwrap()
        })
        .collect();
    PoseSequence::new(id, "cam0", cond, frames, 1).unwrap()
}

/// `base` stretched or squeezed to `len` frames with uniform jitter of
/// half-width `noise` on every coordinate.
pub fn resampled(rng: &mut ChaCha8Rng, base: &PoseSequence, id: &str, cond: &str, len: usize, noise: f64) -> PoseSequence {
    let src = base.frames();
    let frames = (0..len)
        .map(|t| {
            let s = if len == 1 { 0 } else { t * (src.len() - 1) / (len - 1) };
            let flat: Vec<f64> = src[s]
                .flat()
                .map(|v| if noise > 0.0 { v + rng.random_range(-noise..noise) } else { v })
                .collect();
            KeypointFrame::from_flat(&flat, t as u64).unwrap()
        })
        .collect();
    PoseSequence::new(id, "cam0", cond, frames, 1).unwrap()
}

/// A query and `n` candidates derived from one prototype at varying noise
/// levels, so that matched, abandoned, filtered and rejected outcomes all
/// occur under moderate thresholds.
pub fn related_workload(seed: u64, n: usize, lens: std::ops::Range<usize>) -> (PoseSequence, Vec<PoseSequence>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = random_walk(&mut rng, "base", "c", 30, 0.15);
    let qlen = rng.random_range(lens.clone());
    let q = resampled(&mut rng, &base, "q", "c0", qlen, 0.02);
    let g = (0..n)
        .map(|i| {
            let len = rng.random_range(lens.clone());
            let noise = rng.random_range(0.0..0.4);
            resampled(&mut rng, &base, &format!("g{i}"), "c1", len, noise)
        })
        .collect();
    (q, g)
}
