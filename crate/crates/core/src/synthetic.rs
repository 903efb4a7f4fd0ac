//! Deterministic gait-like keypoint sequences with controlled separation.
//!
//! Each identity is a base skeleton (in torso units, hip midpoint at the
//! origin) plus per-joint sinusoidal oscillations locked to a stride period.
//! A capture condition never changes the geometry: it shifts the gait cycle
//! by a phase offset, adds Gaussian keypoint jitter and drops limb joints to
//! low confidence. Frames are emitted as raw COCO-17 pixel coordinates so
//! the full normalize-and-impute path is exercised.
//!
//! When a benchmark is built, identities are resampled until every noise-free
//! cross-identity DTW distance is at least `delta_sep` and every noise-free
//! same-identity cross-condition distance stays below `delta_sep / 2`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetRecord;
use crate::dtw::{dtw_distance, DtwConfig, Window, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::keypoints::{
    PoseSequence, RawJoint, RawKeypointFrame, ANCHOR_JOINTS, BODY_JOINT_COUNT, DEFAULT_CONFIDENCE_FLOOR,
    DEFAULT_FRAME_RATE, FACIAL_JOINT_COUNT, RAW_JOINT_COUNT,
};

pub const MANIFEST_SCHEMA_VERSION: &str = "1";
/// Largest per-axis oscillation amplitude, in torso units.
pub const MAX_AMPLITUDE: f64 = 0.5;
/// `delta_sep` as a multiple of the reference same-identity distance.
pub const SEPARATION_FACTOR: f64 = 5.0;
pub const DEFAULT_NOISE_LADDER: [f64; 6] = [0.0, 0.02, 0.05, 0.1, 0.2, 0.4];

const MAX_ATTEMPTS: u32 = 1000;
const REFERENCE_SAMPLE: u64 = 16;
const VISIBLE_CONFIDENCE: f64 = 0.9;
const DROPPED_CONFIDENCE: f64 = 0.05;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a parent seed and a path of tags.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointOscillation {
    /// Per-axis amplitude in torso units.
    pub amplitude: [f64; 2],
    /// Cycles per frame.
    pub frequency: f64,
    /// Per-axis phase in radians.
    pub phase: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityModel {
    pub seed: u64,
    /// Frames per gait cycle.
    pub stride_period: f64,
    pub base: [[f64; 2]; BODY_JOINT_COUNT],
    pub oscillations: [JointOscillation; BODY_JOINT_COUNT],
}

impl IdentityModel {
    /// Body joint positions (torso units) at fractional time `t`.
    pub fn body_at(&self, t: f64) -> [[f64; 2]; BODY_JOINT_COUNT] {
        let mut out = self.base;
        for (p, osc) in out.iter_mut().zip(&self.oscillations) {
            let angle = 2.0 * PI * osc.frequency * t;
            p[0] += osc.amplitude[0] * (angle + osc.phase[0]).sin();
            p[1] += osc.amplitude[1] * (angle + osc.phase[1]).sin();
        }
        out
    }
}

/// Samples an identity from `seed`. Same seed, same model.
pub fn generate_identity(seed: u64) -> IdentityModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shoulder = rng.random_range(0.12..0.42);
    let hip = rng.random_range(0.08..0.32);
    let upper_arm = rng.random_range(0.35..0.85);
    let forearm = rng.random_range(0.3..0.8);
    let thigh = rng.random_range(0.6..1.25);
    let shin = rng.random_range(0.55..1.15);
    let stride_period: f64 = rng.random_range(18.0..34.0);

    // left / right pairs in body order: shoulders, elbows, wrists, hips, knees, ankles
    let mut base = [[0.0; 2]; BODY_JOINT_COUNT];
    for (side, sign) in [(0usize, -1.0), (1, 1.0)] {
        base[side] = [sign * shoulder, -1.0];
        base[2 + side] = [sign * (shoulder + 0.05), -1.0 + upper_arm];
        base[4 + side] = [sign * (shoulder + 0.08), -1.0 + upper_arm + forearm];
        base[6 + side] = [sign * hip, 0.0];
        base[8 + side] = [sign * hip, thigh];
        base[10 + side] = [sign * hip, thigh + shin];
    }

    let fundamental = 1.0 / stride_period;
    let limb_amp = [
        (2usize, rng.random_range(0.05..0.15)),
        (4, rng.random_range(0.1..0.25)),
        (8, rng.random_range(0.06..0.15)),
        (10, rng.random_range(0.12..0.25)),
    ];
    let arm_phase = rng.random_range(-0.6..0.6);
    let leg_phase = rng.random_range(-0.6..0.6);
    let vertical_ratio = rng.random_range(0.15..0.4);

    let mut oscillations = [JointOscillation { amplitude: [0.0; 2], frequency: fundamental, phase: [0.0; 2] }; BODY_JOINT_COUNT];
    for (left, amp) in limb_amp {
        let is_leg = left >= 8;
        for side in 0..2 {
            // arms swing against the legs, left against right
            let mut phase = if is_leg { leg_phase } else { arm_phase + PI };
            if side == 1 {
                phase += PI;
            }
            oscillations[left + side] = JointOscillation {
                amplitude: [amp, (amp * vertical_ratio).min(MAX_AMPLITUDE)],
                frequency: fundamental,
                phase: [phase, phase + PI / 2.0],
            };
        }
    }
    let bob = rng.random_range(0.01..0.04);
    let sway = rng.random_range(0.0..0.03);
    let bob_phase = rng.random_range(0.0..2.0 * PI);
    for &a in &ANCHOR_JOINTS {
        oscillations[a] = JointOscillation { amplitude: [sway, bob], frequency: 2.0 * fundamental, phase: [bob_phase, bob_phase] };
    }

    IdentityModel { seed, stride_period, base, oscillations }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub condition_tag: String,
    pub camera_tag: String,
    /// Standard deviation of per-joint Gaussian jitter, torso units.
    pub noise_sigma: f64,
    /// Probability that a limb joint is reported with low confidence.
    pub dropout_rate: f64,
    /// Gait-cycle phase shift in radians.
    pub phase_offset: f64,
    /// Torso length in pixels.
    pub pixel_scale: f64,
}

impl ConditionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::InvalidConfig(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!("dropout_rate must be in [0, 1), got {}", self.dropout_rate)));
        }
        if !(self.pixel_scale > 0.0) {
            return Err(Error::InvalidConfig("pixel_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn noise_free(&self) -> Self {
        Self { noise_sigma: 0.0, dropout_rate: 0.0, ..self.clone() }
    }
}

/// `count` conditions cycling clothing (A, B, C, ...) within modality
/// (RGB, IR): `clothesA-RGB`, `clothesA-IR`, `clothesB-RGB`, ... with phase
/// offsets `j * π/8`.
pub fn default_conditions(count: usize, noise_sigma: f64, dropout_rate: f64) -> Vec<ConditionSpec> {
    (0..count)
        .map(|j| {
            let clothes = (b'A' + (j / 2 % 26) as u8) as char;
            let modality = if j % 2 == 0 { "RGB" } else { "IR" };
            ConditionSpec {
                condition_tag: format!("clothes{clothes}-{modality}"),
                camera_tag: format!("cam{j}"),
                noise_sigma,
                dropout_rate,
                phase_offset: (j as f64 * PI / 8.0) % (2.0 * PI),
                pixel_scale: 90.0 + 10.0 * (j % 4) as f64,
            }
        })
        .collect()
}

/// Raw pixel frames for one identity under one condition. `stream_seed`
/// drives jitter and dropout; jitter and dropout draw from separate
/// sub-streams so changing `noise_sigma` does not move the dropout pattern.
/// Every limb joint stays visible in at least one frame.
pub fn render_raw(model: &IdentityModel, cond: &ConditionSpec, length: usize, stream_seed: u64) -> Result<Vec<RawKeypointFrame>> {
    cond.validate()?;
    let mut jitter = ChaCha8Rng::seed_from_u64(derive_seed(stream_seed, &[1]));
    let mut dropout = ChaCha8Rng::seed_from_u64(derive_seed(stream_seed, &[2]));
    let shift = cond.phase_offset / (2.0 * PI) * model.stride_period;
    let head: [[f64; 2]; FACIAL_JOINT_COUNT] = [[0.0, -1.45], [-0.05, -1.5], [0.05, -1.5], [-0.1, -1.45], [0.1, -1.45]];

    let mut frames = Vec::with_capacity(length);
    // per body joint: (frame, draw) of the least-likely drop, to keep one sighting
    let mut best_draw = [(0usize, f64::INFINITY); BODY_JOINT_COUNT];
    let mut seen = [false; BODY_JOINT_COUNT];
    for t in 0..length {
        let body = model.body_at(t as f64 + shift);
        let origin = [320.0 + 2.0 * t as f64, 240.0];
        let mut joints = [RawJoint::new(0.0, 0.0, 0.0); RAW_JOINT_COUNT];
        for (j, slot) in joints.iter_mut().enumerate() {
            let (p, body_joint) = if j < FACIAL_JOINT_COUNT {
                (head[j], None)
            } else {
                let b = j - FACIAL_JOINT_COUNT;
                (body[b], Some(b))
            };
            let zx: f64 = StandardNormal.sample(&mut jitter);
            let zy: f64 = StandardNormal.sample(&mut jitter);
            let u: f64 = dropout.random();
            let x = p[0] + cond.noise_sigma * zx;
            let y = p[1] + cond.noise_sigma * zy;
            let mut confidence = VISIBLE_CONFIDENCE;
            if let Some(b) = body_joint.filter(|b| !ANCHOR_JOINTS.contains(b)) {
                if u < cond.dropout_rate {
                    confidence = DROPPED_CONFIDENCE;
                    if u < best_draw[b].1 {
                        best_draw[b] = (t, u);
                    }
                } else {
                    seen[b] = true;
                }
            }
            *slot = RawJoint::new(origin[0] + cond.pixel_scale * x, origin[1] + cond.pixel_scale * y, confidence);
        }
        frames.push(joints);
    }
    for b in 0..BODY_JOINT_COUNT {
        if !seen[b] && best_draw[b].1.is_finite() {
            frames[best_draw[b].0][FACIAL_JOINT_COUNT + b].confidence = VISIBLE_CONFIDENCE;
        }
    }
    frames
        .iter()
        .enumerate()
        .map(|(t, joints)| RawKeypointFrame::new(joints, t as u64))
        .collect()
}

/// Renders, normalizes and imputes one sequence.
pub fn render_sequence(
    id: &str,
    model: &IdentityModel,
    cond: &ConditionSpec,
    length: usize,
    frame_rate: u32,
    stream_seed: u64,
) -> Result<PoseSequence> {
    if length < frame_rate as usize {
        return Err(Error::InvalidConfig(format!("length {length} is shorter than frame rate {frame_rate}")));
    }
    let raw = render_raw(model, cond, length, stream_seed)?;
    DatasetRecord::from_raw_frames(id, &cond.camera_tag, &cond.condition_tag, frame_rate, &raw).to_sequence(DEFAULT_CONFIDENCE_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub n_identities: usize,
    pub conditions: Vec<ConditionSpec>,
    pub length: usize,
    pub frame_rate: u32,
    pub seed: u64,
    /// Window used for the same-identity margin check. Cross-identity
    /// distances are checked unconstrained, which bounds every band.
    pub margin_window: Window,
}

impl BenchmarkConfig {
    pub fn new(n_identities: usize, conditions: Vec<ConditionSpec>, length: usize, seed: u64) -> Self {
        Self {
            n_identities,
            conditions,
            length,
            frame_rate: DEFAULT_FRAME_RATE,
            seed,
            margin_window: Window::Absolute(DEFAULT_WINDOW),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityInfo {
    pub id: String,
    pub model_seed: u64,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub seed: u64,
    pub n_identities: usize,
    pub length: usize,
    pub frame_rate: u32,
    pub margin_window: Window,
    pub delta_sep: f64,
    /// Largest noise-free same-identity cross-condition distance.
    pub intra_max: f64,
    /// Smallest noise-free cross-identity distance.
    pub inter_min: f64,
    pub identities: Vec<IdentityInfo>,
    pub conditions: Vec<ConditionSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub records: Vec<DatasetRecord>,
    pub manifest: Manifest,
}

impl Benchmark {
    pub fn sequences(&self) -> Result<Vec<PoseSequence>> {
        self.records.iter().map(|r| r.to_sequence(DEFAULT_CONFIDENCE_FLOOR)).collect()
    }
}

fn identity_label(i: usize) -> String {
    format!("P{:03}", i + 1)
}

struct Candidate {
    model: IdentityModel,
    clean: Vec<PoseSequence>,
    intra: f64,
}

fn clean_renders(id: &str, model: &IdentityModel, cfg: &BenchmarkConfig) -> Result<Vec<PoseSequence>> {
    cfg.conditions
        .iter()
        .map(|c| render_sequence(id, model, &c.noise_free(), cfg.length, cfg.frame_rate, 0))
        .collect()
}

fn max_intra(clean: &[PoseSequence], window: Window) -> Result<f64> {
    let cfg = DtwConfig { window, abandon_threshold: f64::INFINITY };
    let mut worst: f64 = 0.0;
    for i in 0..clean.len() {
        for j in 0..clean.len() {
            if i != j {
                let d = dtw_distance(&clean[i], &clean[j], &cfg)?.distance().unwrap_or(f64::INFINITY);
                worst = worst.max(d);
            }
        }
    }
    Ok(worst)
}

fn min_inter(a: &[PoseSequence], b: &[PoseSequence]) -> Result<f64> {
    let cfg = DtwConfig::unconstrained();
    let mut best = f64::INFINITY;
    for x in a {
        for y in b {
            let d = dtw_distance(x, y, &cfg)?.distance().unwrap_or(f64::INFINITY);
            best = best.min(d);
        }
    }
    Ok(best)
}

/// Mean noise-free distance from the first condition to each other
/// condition, averaged over a fixed reference sample of identities.
pub fn expected_intra(cfg: &BenchmarkConfig) -> Result<f64> {
    let dcfg = DtwConfig { window: cfg.margin_window, abandon_threshold: f64::INFINITY };
    let per_identity = (0..REFERENCE_SAMPLE)
        .into_par_iter()
        .map(|k| {
            let model = generate_identity(derive_seed(cfg.seed, &[0x7e, k]));
            let clean = clean_renders("ref", &model, cfg)?;
            let mut sum = 0.0;
            for s in &clean[1..] {
                sum += dtw_distance(&clean[0], s, &dcfg)?.distance().unwrap_or(f64::INFINITY);
            }
            Ok(sum / (clean.len() - 1) as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = per_identity.iter().sum::<f64>() / REFERENCE_SAMPLE as f64;
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::InvalidConfig("conditions must differ in phase offset".into()));
    }
    Ok(mean)
}

/// Builds one sequence per (identity, condition) with the separation margin
/// enforced on the noise-free renders.
pub fn build_benchmark(cfg: &BenchmarkConfig) -> Result<Benchmark> {
    if cfg.n_identities < 2 {
        return Err(Error::InvalidConfig("need at least 2 identities".into()));
    }
    if cfg.conditions.len() < 2 {
        return Err(Error::InvalidConfig("need at least 2 conditions".into()));
    }
    if cfg.length < cfg.frame_rate as usize {
        return Err(Error::InvalidConfig(format!(
            "length {} is shorter than frame rate {}",
            cfg.length, cfg.frame_rate
        )));
    }
    for c in &cfg.conditions {
        c.validate()?;
    }

    let delta_sep = SEPARATION_FACTOR * expected_intra(cfg)?;
    let mut accepted: Vec<Candidate> = Vec::with_capacity(cfg.n_identities);
    let mut infos = Vec::with_capacity(cfg.n_identities);
    let mut inter_min = f64::INFINITY;

    for i in 0..cfg.n_identities {
        let label = identity_label(i);
        let mut attempt = 0u32;
        loop {
            if attempt >= MAX_ATTEMPTS {
                return Err(Error::InvalidConfig(format!(
                    "could not place identity {label} with separation {delta_sep} after {MAX_ATTEMPTS} attempts"
                )));
            }
            let model_seed = derive_seed(cfg.seed, &[0x1d, i as u64, attempt as u64]);
            attempt += 1;
            let model = generate_identity(model_seed);
            let clean = clean_renders(&label, &model, cfg)?;
            let intra = max_intra(&clean, cfg.margin_window)?;
            if !(intra < delta_sep / 2.0) {
                continue;
            }
            let closest = accepted
                .par_iter()
                .map(|a| min_inter(&clean, &a.clean))
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            if closest < delta_sep {
                continue;
            }
            inter_min = inter_min.min(closest);
            infos.push(IdentityInfo { id: label.clone(), model_seed, attempts: attempt });
            accepted.push(Candidate { model, clean, intra });
            break;
        }
    }

    let mut records = Vec::with_capacity(cfg.n_identities * cfg.conditions.len());
    for (i, cand) in accepted.iter().enumerate() {
        for (j, cond) in cfg.conditions.iter().enumerate() {
            let stream = derive_seed(cfg.seed, &[0x5e, i as u64, j as u64]);
            let raw = render_raw(&cand.model, cond, cfg.length, stream)?;
            records.push(DatasetRecord::from_raw_frames(&infos[i].id, &cond.camera_tag, &cond.condition_tag, cfg.frame_rate, &raw));
        }
    }
    let intra_max = accepted.iter().map(|c| c.intra).fold(0.0, f64::max);

    Ok(Benchmark {
        records,
        manifest: Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION.into(),
            seed: cfg.seed,
            n_identities: cfg.n_identities,
            length: cfg.length,
            frame_rate: cfg.frame_rate,
            margin_window: cfg.margin_window,
            delta_sep,
            intra_max,
            inter_min,
            identities: infos,
            conditions: cfg.conditions.clone(),
        },
    })
}
