//! Constrained dynamic-time-warping matching of skeleton keypoint sequences
//! for person re-identification.
//!
//! The pipeline: COCO-17 detections are normalized to a 12-joint body frame
//! ([`keypoints`]), candidates are prefiltered with LB_Kim on per-frame norm
//! series ([`lower_bound`]), survivors are compared with banded,
//! early-abandoning DTW ([`dtw`]) and ranked ([`retrieval`]). The [`cost`]
//! module counts DP cells for each combination of speedups and compares them
//! with closed-form predictions; [`synthetic`] generates gait-like benchmarks
//! with a guaranteed identity margin.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
pub mod dataset;
pub mod dtw;
pub mod error;
pub mod keypoints;
pub mod lower_bound;
pub mod retrieval;
pub mod synthetic;

pub use cost::{measure_run, measure_workload, predicted_cost, s_out, CostReport, Strategy, StrategySet};
pub use dtw::{dtw_distance, dtw_distance_unconstrained, window_contains, DtwConfig, DtwOutcome, Window};
pub use error::{Error, Result};
pub use keypoints::{
    frame_distance, impute_sequence, norm_series, normalize_frame, KeypointFrame, NormSeries, PoseSequence,
    RawJoint, RawKeypointFrame,
};
pub use lower_bound::{lb_features, lb_kim, prefilter, LbFeatures};
pub use retrieval::{
    evaluate, match_query, sweep_hyperparameters, EvalOptions, EvalReport, GalleryEntry, MatchConfig, RankedList,
};
