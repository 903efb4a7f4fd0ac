//! JSON report shapes written by the commands.

use pose_dtw::cost::{CostReport, OrderingVerdict};
use pose_dtw::retrieval::{EvalReport, MatchConfig, MatchStats, RankedList, SweepRow};
use pose_dtw::Window;
use serde::Serialize;

pub const SCHEMA_VERSION: &str = "1";

/// Effective thresholds; `null` means the mechanism is disabled.
#[derive(Debug, Serialize)]
pub struct ConfigEcho {
    pub w: Option<usize>,
    pub window_ratio: Option<f64>,
    pub upsilon: Option<f64>,
    pub epsilon: Option<f64>,
}

impl From<&MatchConfig> for ConfigEcho {
    fn from(c: &MatchConfig) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        let (w, window_ratio) = match c.dtw.window {
            Window::Unconstrained => (None, None),
            Window::Ratio(r) => (None, Some(r)),
            Window::Absolute(w) => (Some(w), None),
        };
        Self { w, window_ratio, upsilon: finite(c.dtw.abandon_threshold), epsilon: finite(c.epsilon) }
    }
}

#[derive(Serialize)]
pub struct MatchReport {
    pub schema_version: &'static str,
    pub command: &'static str,
    pub config: ConfigEcho,
    pub results: Vec<RankedList>,
}

#[derive(Serialize)]
pub struct EvalOutput {
    pub schema_version: &'static str,
    pub command: &'static str,
    pub config: ConfigEcho,
    pub query_condition: String,
    pub gallery_conditions: Vec<String>,
    pub exclude_same_condition: bool,
    pub report: EvalReport,
    pub stats: MatchStats,
}

#[derive(Serialize)]
pub struct BenchOutput {
    pub schema_version: &'static str,
    pub command: &'static str,
    pub config: ConfigEcho,
    pub reports: Vec<CostReport>,
    pub ordering: Option<OrderingVerdict>,
}

#[derive(Serialize)]
pub struct SweepOutput {
    pub schema_version: &'static str,
    pub command: &'static str,
    pub rows: Vec<SweepRow>,
}
