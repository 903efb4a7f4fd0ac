//! LB_Kim prefilter on per-frame norm series.
//!
//! The four-feature bound is defined for scalar series. For pose sequences it
//! is taken on the norm series: along any warping path each aligned pair of
//! frames costs at least `| ||a|| - ||b|| |`, so scalar DTW on the norms never
//! exceeds the multivariate DTW and LB_Kim on the norms bounds both.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keypoints::{norm_series, NormSeries, PoseSequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbFeatures {
    pub start: f64,
    pub end: f64,
    pub greatest: f64,
    pub smallest: f64,
}

pub fn lb_features(series: &NormSeries) -> Result<LbFeatures> {
    let v = series.values();
    let (&start, &end) = v.first().zip(v.last()).ok_or(Error::EmptySequence)?;
    let (smallest, greatest) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    Ok(LbFeatures { start, end, greatest, smallest })
}

pub fn lb_kim(a: &LbFeatures, b: &LbFeatures) -> f64 {
    (a.start - b.start)
        .abs()
        .max((a.end - b.end).abs())
        .max((a.greatest - b.greatest).abs())
        .max((a.smallest - b.smallest).abs())
}

/// Per-sequence data the prefilter needs, computed once per gallery entry.
#[derive(Debug, Clone, PartialEq)]
pub struct LbIndex {
    pub norms: NormSeries,
    pub features: LbFeatures,
}

impl LbIndex {
    pub fn new(seq: &PoseSequence) -> Result<Self> {
        let norms = norm_series(seq);
        let features = lb_features(&norms)?;
        Ok(Self { norms, features })
    }
}

/// Threshold scale for a pair of lengths: ε is a per-frame distance, so the
/// cumulative cut-off is `ε * max(m, n)`.
pub fn epsilon_scale(m: usize, n: usize) -> f64 {
    m.max(n) as f64
}

pub fn epsilon_cutoff(epsilon: f64, m: usize, n: usize) -> f64 {
    if epsilon == f64::INFINITY {
        f64::INFINITY
    } else {
        epsilon * epsilon_scale(m, n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prefiltered {
    /// Gallery indices that passed, in gallery order.
    pub survivors: Vec<usize>,
    /// Number of entries removed (`V`).
    pub filtered: usize,
}

/// Keeps candidate `i` iff `lb_kim(query, candidate_i) < ε * max(m, n_i)`.
/// `candidates` yields `(features, length)` per gallery entry.
pub fn prefilter(query_features: &LbFeatures, query_len: usize, candidates: &[(LbFeatures, usize)], epsilon: f64) -> Prefiltered {
    let keep: Vec<bool> = candidates
        .par_iter()
        .map(|(f, len)| lb_kim(query_features, f) < epsilon_cutoff(epsilon, query_len, *len))
        .collect();
    let survivors: Vec<usize> = keep.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect();
    Prefiltered { filtered: candidates.len() - survivors.len(), survivors }
}

/// Convenience form over whole sequences.
pub fn prefilter_sequences(query: &PoseSequence, gallery: &[PoseSequence], epsilon: f64) -> Result<Prefiltered> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidConfig(format!("epsilon must be non-negative, got {epsilon}")));
    }
    let q = LbIndex::new(query)?;
    let cands = gallery
        .iter()
        .map(|g| LbIndex::new(g).map(|ix| (ix.features, g.len())))
        .collect::<Result<Vec<_>>>()?;
    Ok(prefilter(&q.features, query.len(), &cands, epsilon))
}
