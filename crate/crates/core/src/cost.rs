//! Cell-count cost model for the three speedups: global constraint (GC),
//! lower-bound filtering (LB) and early abandoning (EA).
//!
//! The unit of cost is one DP cell relaxation. For `N` candidates of length
//! `m` against a query of length `n`:
//!
//! | strategies   | predicted cells                  |
//! |--------------|----------------------------------|
//! | none         | `N * m * n`                      |
//! | GC           | `N * (m * n - S_out)`            |
//! | LB           | `(N - V) * m * n`                |
//! | EA           | `N * m * n * k`                  |
//! | GC + LB + EA | `(N - V) * (m * n - S_out) * k`  |
//!
//! Other subsets compose the same factors.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dtw::{band_cell_count, Window};
use crate::error::{Error, Result};
use crate::keypoints::PoseSequence;
use crate::lower_bound::{epsilon_cutoff, lb_kim, LbIndex};
use crate::retrieval::{match_query_with_stats, GalleryEntry, MatchConfig, MatchStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    GC,
    LB,
    EA,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::GC, Strategy::LB, Strategy::EA];

    fn bit(self) -> u8 {
        match self {
            Strategy::GC => 1,
            Strategy::LB => 2,
            Strategy::EA => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StrategySet(u8);

impl StrategySet {
    pub const NONE: StrategySet = StrategySet(0);
    pub const ALL: StrategySet = StrategySet(7);

    pub fn of(strategies: &[Strategy]) -> Self {
        StrategySet(strategies.iter().fold(0, |acc, s| acc | s.bit()))
    }

    pub fn contains(self, s: Strategy) -> bool {
        self.0 & s.bit() != 0
    }

    pub fn with(self, s: Strategy) -> Self {
        StrategySet(self.0 | s.bit())
    }

    /// All eight subsets in a stable order.
    pub fn all_subsets() -> impl Iterator<Item = StrategySet> {
        [0u8, 1, 2, 4, 3, 5, 6, 7].into_iter().map(StrategySet)
    }

    /// `{}`, `{GC}`, `{LB}`, `{EA}`, `{GC, LB, EA}`.
    pub fn canonical() -> [StrategySet; 5] {
        [
            StrategySet::NONE,
            StrategySet::of(&[Strategy::GC]),
            StrategySet::of(&[Strategy::LB]),
            StrategySet::of(&[Strategy::EA]),
            StrategySet::ALL,
        ]
    }

    pub fn strategies(self) -> impl Iterator<Item = Strategy> {
        Strategy::ALL.into_iter().filter(move |s| self.contains(*s))
    }
}

impl fmt::Display for StrategySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            return f.write_str("none");
        }
        let names: Vec<String> = self.strategies().map(|s| format!("{s:?}")).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for StrategySet {
    type Err = Error;

    /// Accepts `none`, or names joined by `+` or `,` (case-insensitive).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("none") || s == "{}" {
            return Ok(StrategySet::NONE);
        }
        s.split(['+', ','])
            .map(|p| match p.trim().to_ascii_uppercase().as_str() {
                "GC" => Ok(Strategy::GC),
                "LB" => Ok(Strategy::LB),
                "EA" => Ok(Strategy::EA),
                other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
            })
            .try_fold(StrategySet::NONE, |acc, st| st.map(|st| acc.with(st)))
    }
}

impl Serialize for StrategySet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StrategySet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Cells of the `m x n` grid outside the warping window of half-width `w`.
pub fn s_out(m: usize, n: usize, w: usize) -> u64 {
    (m * n) as u64 - band_cell_count(m, n, Window::Absolute(w))
}

/// Closed-form cost for uniform-length workloads.
pub fn predicted_cost(strategies: StrategySet, n_gallery: usize, m: usize, n: usize, s_out: u64, v: usize, k: f64) -> f64 {
    let per_pair = if strategies.contains(Strategy::GC) { (m * n) as u64 - s_out } else { (m * n) as u64 };
    let pairs = if strategies.contains(Strategy::LB) { n_gallery - v } else { n_gallery };
    let factor = if strategies.contains(Strategy::EA) { k } else { 1.0 };
    pairs as f64 * per_pair as f64 * factor
}

/// Matching config with only the named strategies switched on; inactive
/// strategies fall back to no band, no abandoning, no prefilter.
pub fn config_for(strategies: StrategySet, params: &MatchConfig) -> MatchConfig {
    let mut cfg = MatchConfig::exhaustive();
    if strategies.contains(Strategy::GC) {
        cfg.dtw.window = params.dtw.window;
    }
    if strategies.contains(Strategy::EA) {
        cfg.dtw.abandon_threshold = params.dtw.abandon_threshold;
    }
    if strategies.contains(Strategy::LB) {
        cfg.epsilon = params.epsilon;
    }
    cfg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub strategies: StrategySet,
    /// Number of query/candidate pairs (`N`; queries × gallery size).
    pub pairs: usize,
    /// Query length when all queries share one.
    pub query_len: Option<usize>,
    /// Candidate length when all candidates share one.
    pub gallery_len: Option<usize>,
    /// `Σ m_i * n`.
    pub cells_full: u64,
    /// Per-pair out-of-band count when lengths are uniform.
    pub s_out: Option<u64>,
    pub s_out_total: u64,
    /// Pairs the lower bound removes at the configured ε.
    pub v: usize,
    /// Mean fraction of in-band cells evaluated per DTW pair.
    pub k: f64,
    pub measured_cells: u64,
    pub stats: MatchStats,
    /// Predicted cells for every strategy subset, keyed by its label.
    pub predicted: BTreeMap<String, f64>,
}

struct PairGeometry {
    full: u64,
    s_out: u64,
    survives_lb: bool,
}

/// Runs one query with the named strategies and accounts for the work.
pub fn measure_run(query: &PoseSequence, gallery: &[GalleryEntry], params: &MatchConfig, strategies: StrategySet) -> Result<CostReport> {
    measure_workload(std::slice::from_ref(query), gallery, params, strategies)
}

/// Like [`measure_run`] over several queries; counters are summed.
pub fn measure_workload(queries: &[PoseSequence], gallery: &[GalleryEntry], params: &MatchConfig, strategies: StrategySet) -> Result<CostReport> {
    params.validate()?;
    if gallery.is_empty() {
        return Err(Error::EmptyGallery);
    }
    let cfg = config_for(strategies, params);
    let mut stats = MatchStats::default();
    let mut geometry = Vec::with_capacity(queries.len() * gallery.len());
    for q in queries {
        let (_, s) = match_query_with_stats(q, gallery, &cfg)?;
        stats.merge(&s);
        let qf = LbIndex::new(q)?.features;
        for g in gallery {
            let (m, n) = (q.len(), g.sequence().len());
            let full = (m * n) as u64;
            geometry.push(PairGeometry {
                full,
                s_out: full - band_cell_count(m, n, params.dtw.window),
                survives_lb: lb_kim(&qf, g.features()) < epsilon_cutoff(params.epsilon, m, n),
            });
        }
    }

    let uniform = |lens: Vec<usize>| lens.windows(2).all(|w| w[0] == w[1]).then(|| lens.first().copied()).flatten();
    let query_len = uniform(queries.iter().map(PoseSequence::len).collect());
    let gallery_len = uniform(gallery.iter().map(|g| g.sequence().len()).collect());
    let cells_full = geometry.iter().map(|p| p.full).sum();
    let s_out_total = geometry.iter().map(|p| p.s_out).sum();
    let v = geometry.iter().filter(|p| !p.survives_lb).count();
    let k = if strategies.contains(Strategy::EA) { stats.mean_cell_fraction() } else { 1.0 };

    let predicted = StrategySet::all_subsets()
        .map(|set| {
            let cells: u64 = geometry
                .iter()
                .filter(|p| !set.contains(Strategy::LB) || p.survives_lb)
                .map(|p| if set.contains(Strategy::GC) { p.full - p.s_out } else { p.full })
                .sum();
            let factor = if set.contains(Strategy::EA) { k } else { 1.0 };
            (set.to_string(), cells as f64 * factor)
        })
        .collect();

    Ok(CostReport {
        strategies,
        pairs: geometry.len(),
        query_len,
        gallery_len,
        cells_full,
        s_out: (query_len.is_some() && gallery_len.is_some()).then(|| geometry.first().map_or(0, |p| p.s_out)),
        s_out_total,
        v,
        k,
        measured_cells: stats.cells,
        stats,
        predicted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingVerdict {
    pub holds: bool,
    pub combined: u64,
    pub singles: BTreeMap<String, u64>,
    pub baseline: u64,
}

/// Checks `combined <= each single strategy <= baseline` on measured cells.
/// `None` when one of the five canonical sets is missing.
pub fn ordering_verdict(measured: &BTreeMap<StrategySet, u64>) -> Option<OrderingVerdict> {
    let baseline = *measured.get(&StrategySet::NONE)?;
    let combined = *measured.get(&StrategySet::ALL)?;
    let mut singles = BTreeMap::new();
    for s in Strategy::ALL {
        let set = StrategySet::of(&[s]);
        singles.insert(set.to_string(), *measured.get(&set)?);
    }
    let holds = singles.values().all(|&c| combined <= c && c <= baseline);
    Some(OrderingVerdict { holds, combined, singles, baseline })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtw::window_contains;

    fn grid_scan(m: usize, n: usize, w: usize) -> u64 {
        let mut c = 0;
        for x in 1..=m {
            for y in 1..=n {
                if !window_contains(x, y, m, n, w) {
                    c += 1;
                }
            }
        }
        c
    }

    #[test]
    fn s_out_examples() {
        assert_eq!(s_out(10, 10, 10), 0);
        assert_eq!(s_out(7, 12, 12), 0);
        assert_eq!(s_out(10, 10, 0), 90);
        assert_eq!(s_out(10, 20, 3), grid_scan(10, 20, 3));
        // frozen from the grid scan above
        assert_eq!(s_out(10, 20, 3), 136);
        assert_eq!(s_out(40, 40, 30), 90);
    }

    #[test]
    fn s_out_matches_grid_scan() {
        for m in 1..25 {
            for n in 1..25 {
                for w in [0, 1, 2, 5, 9, 30] {
                    assert_eq!(s_out(m, n, w), grid_scan(m, n, w), "{m} {n} {w}");
                }
            }
        }
    }

    #[test]
    fn predicted_cost_examples() {
        assert_eq!(predicted_cost(StrategySet::NONE, 10, 100, 100, 0, 0, 1.0), 100_000.0);
        assert_eq!(predicted_cost(StrategySet::of(&[Strategy::LB]), 10, 100, 100, 0, 10, 1.0), 0.0);
        assert_eq!(predicted_cost(StrategySet::ALL, 10, 100, 100, 4000, 3, 0.5), 21_000.0);
        assert_eq!(predicted_cost(StrategySet::of(&[Strategy::GC]), 10, 100, 100, 4000, 3, 0.5), 60_000.0);
        assert_eq!(predicted_cost(StrategySet::of(&[Strategy::EA]), 10, 100, 100, 4000, 3, 0.5), 50_000.0);
    }

    #[test]
    fn strategy_set_parsing_and_labels() {
        assert_eq!("none".parse::<StrategySet>().unwrap(), StrategySet::NONE);
        assert_eq!("ea,gc".parse::<StrategySet>().unwrap(), StrategySet::of(&[Strategy::GC, Strategy::EA]));
        assert_eq!("GC+LB+EA".parse::<StrategySet>().unwrap(), StrategySet::ALL);
        assert!("GC+XX".parse::<StrategySet>().is_err());
        assert_eq!(StrategySet::ALL.to_string(), "GC+LB+EA");
        assert_eq!(StrategySet::NONE.to_string(), "none");
        assert_eq!(StrategySet::all_subsets().count(), 8);
    }
}
