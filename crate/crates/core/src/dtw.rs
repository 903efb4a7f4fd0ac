//! Banded dynamic time warping with per-column early abandoning.
//!
//! Cells are addressed 1-based as `(x, y)` with `x` running over the query
//! (length `m`) and `y` over the candidate (length `n`). The band is the
//! slanted Sakoe-Chiba window `|y - (n/m) x| <= w` evaluated in floating
//! point. Steps are the symmetric set `{(1,0), (0,1), (1,1)}` with unit
//! weights, so the distance is the plain sum of frame distances along the
//! cheapest admissible path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keypoints::{frame_distance, KeypointFrame, PoseSequence};

pub const DEFAULT_WINDOW: usize = 30;
pub const DEFAULT_ABANDON_THRESHOLD: f64 = 8.0;

/// Half-width of the warping window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Every cell of the grid is admissible.
    Unconstrained,
    /// `w = ceil(r * max(m, n))`, `r` in `[0, 1]`.
    Ratio(f64),
    /// Absolute width in frames.
    Absolute(usize),
}

impl Window {
    pub fn width(&self, m: usize, n: usize) -> usize {
        match *self {
            Window::Unconstrained => m.max(n),
            Window::Ratio(r) => (r * m.max(n) as f64).ceil() as usize,
            Window::Absolute(w) => w,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtwConfig {
    pub window: Window,
    /// Cumulative distance at which matching stops. `f64::INFINITY` disables
    /// abandoning.
    pub abandon_threshold: f64,
}

impl Default for DtwConfig {
    fn default() -> Self {
        Self {
            window: Window::Absolute(DEFAULT_WINDOW),
            abandon_threshold: DEFAULT_ABANDON_THRESHOLD,
        }
    }
}

impl DtwConfig {
    pub fn new(window: Window, abandon_threshold: f64) -> Result<Self> {
        let cfg = Self { window, abandon_threshold };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Full grid, no abandoning.
    pub fn unconstrained() -> Self {
        Self { window: Window::Unconstrained, abandon_threshold: f64::INFINITY }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abandon_threshold > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "abandon threshold must be positive, got {}",
                self.abandon_threshold
            )));
        }
        if let Window::Ratio(r) = self.window {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidConfig(format!("window ratio {r} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DtwOutcome {
    Distance {
        distance: f64,
        /// 1-based `(x, y)` cells from `(1, 1)` to `(m, n)`; only filled by
        /// the path-returning entry points.
        path: Option<Vec<(usize, usize)>>,
        cells_evaluated: u64,
    },
    Abandoned { cells_evaluated: u64 },
}

impl DtwOutcome {
    pub fn distance(&self) -> Option<f64> {
        match self {
            DtwOutcome::Distance { distance, .. } => Some(*distance),
            DtwOutcome::Abandoned { .. } => None,
        }
    }

    pub fn cells_evaluated(&self) -> u64 {
        match self {
            DtwOutcome::Distance { cells_evaluated, .. } | DtwOutcome::Abandoned { cells_evaluated } => {
                *cells_evaluated
            }
        }
    }

    pub fn path(&self) -> Option<&[(usize, usize)]> {
        match self {
            DtwOutcome::Distance { path: Some(p), .. } => Some(p),
            _ => None,
        }
    }

    pub fn is_abandoned(&self) -> bool {
        matches!(self, DtwOutcome::Abandoned { .. })
    }
}

/// Membership of grid point `(x, y)` in the warping window of an `m x n`
/// grid with half-width `w`.
pub fn window_contains(x: usize, y: usize, m: usize, n: usize, w: usize) -> bool {
    // |y - (n/m) x| <= w, scaled by m to stay in exact integer arithmetic
    let (x, y, m_, n_, w) = (x as u128, y as u128, m as u128, n as u128, w as u128);
    x <= m_ && y <= n_ && (y * m_).abs_diff(n_ * x) <= w * m_
}

/// Inclusive 1-based row range of column `x` that lies inside the window, or
/// `None` when the column has no admissible cell.
pub fn band_rows(x: usize, m: usize, n: usize, w: usize) -> Option<(usize, usize)> {
    if x == 0 || x > m {
        return None;
    }
    let center = n as f64 / m as f64 * x as f64;
    let mut lo = ((center - w as f64).ceil().max(1.0) as usize).min(n);
    let mut hi = ((center + w as f64).floor().max(0.0) as usize).min(n);
    // The rounded guesses can be off by one against the exact predicate.
    while lo > 1 && window_contains(x, lo - 1, m, n, w) {
        lo -= 1;
    }
    while lo <= n && !window_contains(x, lo, m, n, w) {
        lo += 1;
    }
    while hi < n && window_contains(x, hi + 1, m, n, w) {
        hi += 1;
    }
    while hi >= 1 && !window_contains(x, hi, m, n, w) {
        hi -= 1;
    }
    (lo >= 1 && lo <= hi).then_some((lo, hi))
}

/// Whether the band admits a step-pattern path from `(1, 1)` to `(m, n)`.
/// When it does, every in-band cell is reachable.
pub fn band_is_feasible(m: usize, n: usize, w: usize) -> bool {
    if m == 0 || n == 0 || !window_contains(1, 1, m, n, w) || !window_contains(m, n, m, n, w) {
        return false;
    }
    let mut prev: Option<(usize, usize)> = None;
    for x in 1..=m {
        let Some((lo, hi)) = band_rows(x, m, n, w) else {
            return false;
        };
        if let Some((plo, phi)) = prev {
            // entered either horizontally from (x-1, lo) or diagonally from (x-1, lo-1)
            if lo < plo || lo > phi + 1 {
                return false;
            }
        }
        prev = Some((lo, hi));
    }
    true
}

/// Number of grid cells inside the band (all `m * n` when unconstrained).
pub fn band_cell_count(m: usize, n: usize, window: Window) -> u64 {
    match window {
        Window::Unconstrained => (m * n) as u64,
        w => {
            let w = w.width(m, n);
            (1..=m)
                .filter_map(|x| band_rows(x, m, n, w))
                .map(|(lo, hi)| (hi - lo + 1) as u64)
                .sum()
        }
    }
}

struct Column {
    lo: usize,
    values: Vec<f64>,
}

impl Column {
    fn get(&self, y: usize) -> f64 {
        if y < self.lo {
            return f64::INFINITY;
        }
        self.values.get(y - self.lo).copied().unwrap_or(f64::INFINITY)
    }
}

/// DTW over arbitrary element slices with a caller-supplied element metric.
pub fn dtw_by<T, F>(query: &[T], candidate: &[T], cfg: &DtwConfig, with_path: bool, cost: F) -> Result<DtwOutcome>
where
    F: Fn(&T, &T) -> f64,
{
    cfg.validate()?;
    let (m, n) = (query.len(), candidate.len());
    if m == 0 || n == 0 {
        return Err(Error::EmptySequence);
    }
    let w = cfg.window.width(m, n);
    let unconstrained = matches!(cfg.window, Window::Unconstrained);
    let rows = |x: usize| if unconstrained { Some((1, n)) } else { band_rows(x, m, n, w) };
    let infeasible = Error::InfeasibleBand { m, n, w };
    if !unconstrained && !band_is_feasible(m, n, w) {
        return Err(infeasible);
    }

    let upsilon = cfg.abandon_threshold;
    let mut full = with_path.then(|| vec![f64::INFINITY; m * n]);
    let mut prev = Column { lo: 0, values: vec![0.0] };
    let mut cells = 0u64;

    for x in 1..=m {
        let (lo, hi) = rows(x).ok_or_else(|| infeasible.clone())?;
        let mut values = Vec::with_capacity(hi - lo + 1);
        let mut col_min = f64::INFINITY;
        for y in lo..=hi {
            let vertical = if y > lo { values[y - lo - 1] } else { f64::INFINITY };
            let best = prev.get(y - 1).min(prev.get(y)).min(vertical);
            let d = cost(&query[x - 1], &candidate[y - 1]) + best;
            cells += 1;
            col_min = col_min.min(d);
            values.push(d);
        }
        if let Some(full) = full.as_mut() {
            full[(x - 1) * n + (lo - 1)..(x - 1) * n + hi].copy_from_slice(&values);
        }
        if col_min == f64::INFINITY {
            return Err(infeasible);
        }
        if col_min >= upsilon {
            return Ok(DtwOutcome::Abandoned { cells_evaluated: cells });
        }
        prev = Column { lo, values };
    }

    let distance = prev.get(n);
    if distance == f64::INFINITY {
        return Err(infeasible);
    }
    if distance >= upsilon {
        return Ok(DtwOutcome::Abandoned { cells_evaluated: cells });
    }
    let path = full.map(|acc| backtrack(&acc, m, n));
    Ok(DtwOutcome::Distance { distance, path, cells_evaluated: cells })
}

fn backtrack(acc: &[f64], m: usize, n: usize) -> Vec<(usize, usize)> {
    let at = |x: usize, y: usize| {
        if x == 0 || y == 0 {
            f64::INFINITY
        } else {
            acc[(x - 1) * n + (y - 1)]
        }
    };
    let (mut x, mut y) = (m, n);
    let mut path = vec![(x, y)];
    while (x, y) != (1, 1) {
        // Ties prefer the diagonal step.
        let candidates = [(x - 1, y - 1), (x - 1, y), (x, y - 1)];
        let mut best = candidates[0];
        for &c in &candidates[1..] {
            if at(c.0, c.1) < at(best.0, best.1) {
                best = c;
            }
        }
        (x, y) = best;
        path.push((x, y));
    }
    path.reverse();
    path
}

/// Banded, early-abandoning DTW between two pose sequences.
pub fn dtw_distance(query: &PoseSequence, candidate: &PoseSequence, cfg: &DtwConfig) -> Result<DtwOutcome> {
    dtw_frames(query.frames(), candidate.frames(), cfg, false)
}

/// Like [`dtw_distance`] but also recovers the optimal warping path.
pub fn dtw_alignment(query: &PoseSequence, candidate: &PoseSequence, cfg: &DtwConfig) -> Result<DtwOutcome> {
    dtw_frames(query.frames(), candidate.frames(), cfg, true)
}

pub fn dtw_distance_unconstrained(query: &PoseSequence, candidate: &PoseSequence) -> Result<DtwOutcome> {
    dtw_frames(query.frames(), candidate.frames(), &DtwConfig::unconstrained(), true)
}

pub fn dtw_frames(
    query: &[KeypointFrame],
    candidate: &[KeypointFrame],
    cfg: &DtwConfig,
    with_path: bool,
) -> Result<DtwOutcome> {
    dtw_by(query, candidate, cfg, with_path, frame_distance)
}

/// Scalar DTW with `|a - b|` as the element metric.
pub fn dtw_scalar(query: &[f64], candidate: &[f64], cfg: &DtwConfig, with_path: bool) -> Result<DtwOutcome> {
    dtw_by(query, candidate, cfg, with_path, |a, b| (a - b).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs_window(w: usize) -> DtwConfig {
        DtwConfig { window: Window::Absolute(w), abandon_threshold: f64::INFINITY }
    }

    #[test]
    fn window_examples() {
        assert!(window_contains(5, 5, 10, 10, 2));
        assert!(!window_contains(0, 5, 10, 10, 2));
        for (m, n) in [(10, 10), (7, 19), (40, 3)] {
            for w in 0..4 {
                assert!(window_contains(m, n, m, n, w));
            }
        }
    }

    #[test]
    fn band_rows_match_predicate() {
        for m in 1..15 {
            for n in 1..15 {
                for w in 0..8 {
                    for x in 1..=m {
                        let scan: Vec<usize> = (1..=n).filter(|&y| window_contains(x, y, m, n, w)).collect();
                        let got = band_rows(x, m, n, w);
                        match got {
                            None => assert!(scan.is_empty()),
                            Some((lo, hi)) => assert_eq!(scan, (lo..=hi).collect::<Vec<_>>()),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn scalar_example_with_repeated_element() {
        let out = dtw_scalar(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 3.0], &abs_window(4), true).unwrap();
        assert_eq!(out.distance(), Some(0.0));
        assert_eq!(out.path().unwrap(), &[(1, 1), (2, 2), (2, 3), (3, 4)]);
    }

    #[test]
    fn abandons_after_second_column() {
        let cfg = DtwConfig { window: Window::Unconstrained, abandon_threshold: 8.0 };
        let out = dtw_scalar(&[0.0; 3], &[5.0; 3], &cfg, false).unwrap();
        // column 1: 5, 10, 15 (min 5); column 2: 10, 10, 15 (min 10 >= 8)
        assert_eq!(out, DtwOutcome::Abandoned { cells_evaluated: 6 });
    }

    #[test]
    fn final_distance_at_threshold_is_abandoned() {
        let cfg = DtwConfig { window: Window::Unconstrained, abandon_threshold: 2.0 };
        let out = dtw_scalar(&[0.0, 0.0], &[0.0, 2.0], &cfg, false).unwrap();
        assert!(out.is_abandoned());
        let cfg = DtwConfig { abandon_threshold: 2.5, ..cfg };
        assert_eq!(dtw_scalar(&[0.0, 0.0], &[0.0, 2.0], &cfg, false).unwrap().distance(), Some(2.0));
    }

    #[test]
    fn single_element_query_matches_repeats() {
        let out = dtw_scalar(&[1.0], &[1.0, 1.0, 1.0], &DtwConfig::unconstrained(), true).unwrap();
        assert_eq!(out.distance(), Some(0.0));
        assert_eq!(out.path().unwrap(), &[(1, 1), (1, 2), (1, 3)]);
    }

    #[test]
    fn empty_and_infeasible() {
        let cfg = DtwConfig::unconstrained();
        assert_eq!(dtw_scalar(&[], &[1.0], &cfg, false), Err(Error::EmptySequence));
        // slope 2 with w = 0 leaves (1, 1) outside the band
        assert!(matches!(
            dtw_scalar(&[0.0; 10], &[0.0; 20], &abs_window(0), false),
            Err(Error::InfeasibleBand { .. })
        ));
    }

    #[test]
    fn zero_width_band_on_square_grid_is_the_diagonal() {
        let q = [1.0, 4.0, 2.0, 8.0];
        let l = [2.0, 4.0, 5.0, 8.0];
        let out = dtw_scalar(&q, &l, &abs_window(0), true).unwrap();
        assert_eq!(out.distance(), Some(1.0 + 0.0 + 3.0 + 0.0));
        assert_eq!(out.cells_evaluated(), 4);
        assert_eq!(out.path().unwrap(), &[(1, 1), (2, 2), (3, 3), (4, 4)]);
    }

    #[test]
    fn feasibility_agrees_with_dp_reachability() {
        for m in 1..12 {
            for n in 1..12 {
                for w in 0..4 {
                    let q: Vec<f64> = (0..m).map(|i| i as f64).collect();
                    let l: Vec<f64> = (0..n).map(|i| (i * 2) as f64).collect();
                    let res = dtw_scalar(&q, &l, &abs_window(w), false);
                    assert_eq!(band_is_feasible(m, n, w), res.is_ok(), "m={m} n={n} w={w}");
                    if let Ok(out) = res {
                        assert_eq!(out.cells_evaluated(), band_cell_count(m, n, Window::Absolute(w)));
                    }
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(DtwConfig::new(Window::Absolute(3), 0.0).is_err());
        assert!(DtwConfig::new(Window::Absolute(3), f64::NAN).is_err());
        assert!(DtwConfig::new(Window::Ratio(1.5), 1.0).is_err());
        assert!(DtwConfig::new(Window::Ratio(0.5), f64::INFINITY).is_ok());
        assert_eq!(Window::Ratio(0.25).width(10, 30), 8);
        assert_eq!(Window::Ratio(1.0).width(40, 40), 40);
    }
}
