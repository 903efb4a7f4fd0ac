//! Query-against-gallery matching and re-ID evaluation (CMC and mAP).
//!
//! Pipeline per query: LB_Kim prefilter at `ε * max(m, n)`, banded DTW with
//! early abandoning at `υ`, then an ascending sort. Entries that are filtered,
//! abandoned, or whose final distance is not below the ε cut-off stay in the
//! list at `+∞` so metric denominators always cover the whole gallery. Ties
//! keep gallery order.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dtw::{band_cell_count, dtw_distance, DtwConfig, DtwOutcome, Window, DEFAULT_ABANDON_THRESHOLD, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::keypoints::{NormSeries, PoseSequence};
use crate::lower_bound::{epsilon_cutoff, lb_kim, LbFeatures, LbIndex};

pub const DEFAULT_EPSILON: f64 = 0.8;
pub const CMC_RANKS: [usize; 4] = [1, 5, 10, 20];

/// Matching hyperparameters: DTW window and abandon threshold plus the
/// lower-bound threshold ε (`f64::INFINITY` disables the prefilter).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub dtw: DtwConfig,
    pub epsilon: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            dtw: DtwConfig { window: Window::Absolute(DEFAULT_WINDOW), abandon_threshold: DEFAULT_ABANDON_THRESHOLD },
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl MatchConfig {
    pub fn new(window: Window, abandon_threshold: f64, epsilon: f64) -> Result<Self> {
        let cfg = Self { dtw: DtwConfig { window, abandon_threshold }, epsilon };
        cfg.validate()?;
        Ok(cfg)
    }

    /// No band, no abandoning, no prefilter.
    pub fn exhaustive() -> Self {
        Self { dtw: DtwConfig::unconstrained(), epsilon: f64::INFINITY }
    }

    pub fn validate(&self) -> Result<()> {
        self.dtw.validate()?;
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon must be non-negative, got {}", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryEntry {
    sequence: PoseSequence,
    lb: LbIndex,
}

impl GalleryEntry {
    pub fn new(sequence: PoseSequence) -> Result<Self> {
        let lb = LbIndex::new(&sequence)?;
        Ok(Self { sequence, lb })
    }

    pub fn sequence(&self) -> &PoseSequence {
        &self.sequence
    }

    pub fn norms(&self) -> &NormSeries {
        &self.lb.norms
    }

    pub fn features(&self) -> &LbFeatures {
        &self.lb.features
    }
}

pub fn build_gallery(sequences: impl IntoIterator<Item = PoseSequence>) -> Result<Vec<GalleryEntry>> {
    sequences.into_iter().map(GalleryEntry::new).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStatus {
    Matched,
    /// Removed by the lower-bound prefilter.
    Filtered,
    /// DTW stopped at the abandon threshold.
    Abandoned,
    /// DTW completed but the distance is not below the ε cut-off.
    Rejected,
    /// The warping window admits no path for these lengths.
    Infeasible,
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        v.is_finite().then_some(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub gallery_index: usize,
    pub gallery_id: String,
    pub condition_tag: String,
    /// `+∞` (serialized as `null`) for entries that were not matched.
    #[serde(with = "inf_as_null")]
    pub distance: f64,
    pub status: MatchStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub query_condition: String,
    pub entries: Vec<RankedEntry>,
}

/// Work counters for one or more queries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchStats {
    pub pairs: usize,
    pub filtered: usize,
    /// Pairs that went through DTW (prefilter survivors with a feasible band).
    pub dtw_pairs: usize,
    pub abandoned: usize,
    pub rejected: usize,
    pub infeasible: usize,
    /// DP cells relaxed.
    pub cells: u64,
    /// Sum over `dtw_pairs` of cells relaxed divided by in-band cells.
    pub cell_fraction_sum: f64,
}

impl MatchStats {
    pub fn merge(&mut self, other: &MatchStats) {
        self.pairs += other.pairs;
        self.filtered += other.filtered;
        self.dtw_pairs += other.dtw_pairs;
        self.abandoned += other.abandoned;
        self.rejected += other.rejected;
        self.infeasible += other.infeasible;
        self.cells += other.cells;
        self.cell_fraction_sum += other.cell_fraction_sum;
    }

    /// Mean fraction of in-band cells evaluated per DTW pair; 1 when nothing
    /// was abandoned or no pair reached DTW.
    pub fn mean_cell_fraction(&self) -> f64 {
        if self.dtw_pairs == 0 {
            1.0
        } else {
            self.cell_fraction_sum / self.dtw_pairs as f64
        }
    }
}

struct PairResult {
    distance: f64,
    status: MatchStatus,
    cells: u64,
    in_band: u64,
}

fn match_pair(query: &PoseSequence, q_feat: &LbFeatures, entry: &GalleryEntry, cfg: &MatchConfig) -> Result<PairResult> {
    let (m, n) = (query.len(), entry.sequence.len());
    let cutoff = epsilon_cutoff(cfg.epsilon, m, n);
    let unmatched = |status, cells, in_band| PairResult { distance: f64::INFINITY, status, cells, in_band };
    if !(lb_kim(q_feat, entry.features()) < cutoff) {
        return Ok(unmatched(MatchStatus::Filtered, 0, 0));
    }
    let in_band = band_cell_count(m, n, cfg.dtw.window);
    match dtw_distance(query, &entry.sequence, &cfg.dtw) {
        Ok(DtwOutcome::Abandoned { cells_evaluated }) => Ok(unmatched(MatchStatus::Abandoned, cells_evaluated, in_band)),
        Ok(DtwOutcome::Distance { distance, cells_evaluated, .. }) if distance < cutoff => Ok(PairResult {
            distance,
            status: MatchStatus::Matched,
            cells: cells_evaluated,
            in_band,
        }),
        Ok(DtwOutcome::Distance { cells_evaluated, .. }) => Ok(unmatched(MatchStatus::Rejected, cells_evaluated, in_band)),
        Err(Error::InfeasibleBand { .. }) => Ok(unmatched(MatchStatus::Infeasible, 0, 0)),
        Err(e) => Err(e),
    }
}

/// Ranks the gallery against one query and reports the work done.
pub fn match_query_with_stats(query: &PoseSequence, gallery: &[GalleryEntry], cfg: &MatchConfig) -> Result<(RankedList, MatchStats)> {
    cfg.validate()?;
    if gallery.is_empty() {
        return Err(Error::EmptyGallery);
    }
    let q_feat = LbIndex::new(query)?.features;
    let results = gallery
        .par_iter()
        .map(|entry| match_pair(query, &q_feat, entry, cfg))
        .collect::<Result<Vec<_>>>()?;

    let mut stats = MatchStats { pairs: gallery.len(), ..Default::default() };
    for r in &results {
        stats.cells += r.cells;
        match r.status {
            MatchStatus::Filtered => stats.filtered += 1,
            MatchStatus::Infeasible => stats.infeasible += 1,
            s => {
                stats.dtw_pairs += 1;
                stats.cell_fraction_sum += r.cells as f64 / r.in_band as f64;
                match s {
                    MatchStatus::Abandoned => stats.abandoned += 1,
                    MatchStatus::Rejected => stats.rejected += 1,
                    _ => {}
                }
            }
        }
    }

    let mut entries: Vec<RankedEntry> = results
        .into_iter()
        .zip(gallery)
        .enumerate()
        .map(|(i, (r, g))| RankedEntry {
            gallery_index: i,
            gallery_id: g.sequence.id().to_string(),
            condition_tag: g.sequence.condition_tag().to_string(),
            distance: r.distance,
            status: r.status,
        })
        .collect();
    // stable: equal distances keep gallery order
    entries.sort_by(|a, b| a.distance.total_cmp(&b.distance));

    let list = RankedList {
        query_id: query.id().to_string(),
        query_condition: query.condition_tag().to_string(),
        entries,
    };
    Ok((list, stats))
}

pub fn match_query(query: &PoseSequence, gallery: &[GalleryEntry], cfg: &MatchConfig) -> Result<RankedList> {
    match_query_with_stats(query, gallery, cfg).map(|(list, _)| list)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Drop gallery entries with the query's identity and condition tag
    /// from scoring (same-capture matches).
    pub exclude_same_condition: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { exclude_same_condition: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub query_id: String,
    pub query_condition: String,
    /// 1-based rank of the first correct match.
    pub first_hit_rank: usize,
    pub average_precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_queries: usize,
    pub num_gallery: usize,
    /// CMC hit rate at each rank in [`CMC_RANKS`].
    pub rank_k: BTreeMap<usize, f64>,
    #[serde(rename = "mAP")]
    pub map: f64,
    pub per_query: Vec<QueryScore>,
}

impl EvalReport {
    pub fn rank(&self, k: usize) -> f64 {
        self.rank_k.get(&k).copied().unwrap_or(f64::NAN)
    }
}

/// CMC and mAP over precomputed rankings. `rankings[i]` must rank the same
/// gallery for query `i`.
pub fn score_rankings(rankings: &[RankedList], gallery: &[GalleryEntry], opts: &EvalOptions) -> Result<EvalReport> {
    let mut missing = Vec::new();
    let mut per_query = Vec::with_capacity(rankings.len());
    for list in rankings {
        let mut relevant_ranks = Vec::new();
        let mut rank = 0usize;
        for e in &list.entries {
            let g = gallery[e.gallery_index].sequence();
            let same_id = g.id() == list.query_id;
            if opts.exclude_same_condition && same_id && g.condition_tag() == list.query_condition {
                continue;
            }
            rank += 1;
            if same_id {
                relevant_ranks.push(rank);
            }
        }
        if relevant_ranks.is_empty() {
            missing.push(list.query_id.clone());
            continue;
        }
        let ap = relevant_ranks
            .iter()
            .enumerate()
            .map(|(i, &r)| (i + 1) as f64 / r as f64)
            .sum::<f64>()
            / relevant_ranks.len() as f64;
        per_query.push(QueryScore {
            query_id: list.query_id.clone(),
            query_condition: list.query_condition.clone(),
            first_hit_rank: relevant_ranks[0],
            average_precision: ap,
        });
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::MissingGroundTruth(missing));
    }
    let nq = per_query.len();
    let rank_k = CMC_RANKS
        .iter()
        .map(|&k| {
            let hits = per_query.iter().filter(|q| q.first_hit_rank <= k).count();
            (k, if nq == 0 { 0.0 } else { hits as f64 / nq as f64 })
        })
        .collect();
    let map = if nq == 0 { 0.0 } else { per_query.iter().map(|q| q.average_precision).sum::<f64>() / nq as f64 };
    Ok(EvalReport { num_queries: nq, num_gallery: gallery.len(), rank_k, map, per_query })
}

/// Runs every query and scores the result; also returns the rankings and
/// the merged work counters.
pub fn evaluate_detailed(
    queries: &[PoseSequence],
    gallery: &[GalleryEntry],
    cfg: &MatchConfig,
    opts: &EvalOptions,
) -> Result<(EvalReport, Vec<RankedList>, MatchStats)> {
    let runs = queries
        .par_iter()
        .map(|q| match_query_with_stats(q, gallery, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut stats = MatchStats::default();
    let mut rankings = Vec::with_capacity(runs.len());
    for (list, s) in runs {
        stats.merge(&s);
        rankings.push(list);
    }
    let report = score_rankings(&rankings, gallery, opts)?;
    Ok((report, rankings, stats))
}

pub fn evaluate(queries: &[PoseSequence], gallery: &[GalleryEntry], cfg: &MatchConfig, opts: &EvalOptions) -> Result<EvalReport> {
    evaluate_detailed(queries, gallery, cfg, opts).map(|(r, _, _)| r)
}

/// Splits a dataset into queries (one condition tag) and gallery (the listed
/// tags, or every other tag when `gallery_conditions` is empty).
pub fn split_by_condition(
    sequences: &[PoseSequence],
    query_condition: &str,
    gallery_conditions: &[String],
) -> Result<(Vec<PoseSequence>, Vec<PoseSequence>)> {
    let queries: Vec<PoseSequence> = sequences.iter().filter(|s| s.condition_tag() == query_condition).cloned().collect();
    if queries.is_empty() {
        return Err(Error::InvalidConfig(format!("no sequences with condition tag {query_condition:?}")));
    }
    let gallery: Vec<PoseSequence> = sequences
        .iter()
        .filter(|s| {
            if gallery_conditions.is_empty() {
                s.condition_tag() != query_condition
            } else {
                gallery_conditions.iter().any(|c| c == s.condition_tag())
            }
        })
        .cloned()
        .collect();
    if gallery.is_empty() {
        return Err(Error::EmptyGallery);
    }
    Ok((queries, gallery))
}

/// One hyperparameter combination; `None` disables that mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub group: String,
    pub window: Option<usize>,
    pub abandon_threshold: Option<f64>,
    pub epsilon: Option<f64>,
}

impl SweepPoint {
    pub fn config(&self) -> MatchConfig {
        MatchConfig {
            dtw: DtwConfig {
                window: self.window.map_or(Window::Unconstrained, Window::Absolute),
                abandon_threshold: self.abandon_threshold.unwrap_or(f64::INFINITY),
            },
            epsilon: self.epsilon.unwrap_or(f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub windows: Vec<usize>,
    pub abandon_thresholds: Vec<f64>,
    pub epsilons: Vec<f64>,
}

impl SweepGrid {
    /// w from 10 to 40 step 10, υ from 3 to 8 step 1, ε from 0.2 to 0.8 step 0.2.
    pub fn reference() -> Self {
        Self {
            windows: vec![10, 20, 30, 40],
            abandon_thresholds: vec![3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
            epsilons: vec![0.2, 0.4, 0.6, 0.8],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty() && self.abandon_thresholds.is_empty() && self.epsilons.is_empty()
    }

    /// Full Cartesian product; an empty axis is held disabled.
    pub fn cartesian_points(&self) -> Vec<SweepPoint> {
        fn axis<T: Copy>(v: &[T]) -> Vec<Option<T>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        }
        let mut out = Vec::new();
        for &w in &axis(&self.windows) {
            for &u in &axis(&self.abandon_thresholds) {
                for &e in &axis(&self.epsilons) {
                    out.push(SweepPoint { group: "grid".into(), window: w, abandon_threshold: u, epsilon: e });
                }
            }
        }
        out
    }

    /// One row per value on each axis with the other two mechanisms disabled.
    pub fn axis_points(&self) -> Vec<SweepPoint> {
        let none = |group: &str| SweepPoint { group: group.into(), window: None, abandon_threshold: None, epsilon: None };
        let mut out = Vec::new();
        out.extend(self.windows.iter().map(|&w| SweepPoint { window: Some(w), ..none("window") }));
        out.extend(self.abandon_thresholds.iter().map(|&u| SweepPoint { abandon_threshold: Some(u), ..none("abandon") }));
        out.extend(self.epsilons.iter().map(|&e| SweepPoint { epsilon: Some(e), ..none("epsilon") }));
        out
    }
}

/// Joint combinations at a fixed window: every `(υ, ε)` pair.
pub fn combination_points(window: usize, abandon_thresholds: &[f64], epsilons: &[f64]) -> Vec<SweepPoint> {
    abandon_thresholds
        .iter()
        .flat_map(|&u| {
            epsilons.iter().map(move |&e| SweepPoint {
                group: "combination".into(),
                window: Some(window),
                abandon_threshold: Some(u),
                epsilon: Some(e),
            })
        })
        .collect()
}

/// The independent-axis sweep over [`SweepGrid::reference`] (4 + 6 + 4 rows)
/// followed by the six joint combinations at `w = 30`, `υ ∈ {6, 7, 8}`,
/// `ε ∈ {0.6, 0.8}`.
pub fn reference_sweep_points() -> Vec<SweepPoint> {
    let mut points = SweepGrid::reference().axis_points();
    points.extend(combination_points(30, &[6.0, 7.0, 8.0], &[0.6, 0.8]));
    points
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(flatten)]
    pub point: SweepPoint,
    pub rank1: f64,
    pub rank5: f64,
    #[serde(rename = "mAP")]
    pub map: f64,
    pub measured_cells: u64,
    pub mean_cell_fraction: f64,
}

pub fn run_sweep(points: &[SweepPoint], queries: &[PoseSequence], gallery: &[GalleryEntry], opts: &EvalOptions) -> Result<Vec<SweepRow>> {
    if points.is_empty() {
        return Err(Error::InvalidConfig("empty sweep".into()));
    }
    points
        .iter()
        .map(|p| {
            let (report, _, stats) = evaluate_detailed(queries, gallery, &p.config(), opts)?;
            Ok(SweepRow {
                point: p.clone(),
                rank1: report.rank(1),
                rank5: report.rank(5),
                map: report.map,
                measured_cells: stats.cells,
                mean_cell_fraction: stats.mean_cell_fraction(),
            })
        })
        .collect()
}

pub fn sweep_hyperparameters(grid: &SweepGrid, queries: &[PoseSequence], gallery: &[GalleryEntry], opts: &EvalOptions) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty sweep grid".into()));
    }
    run_sweep(&grid.cartesian_points(), queries, gallery, opts)
}
