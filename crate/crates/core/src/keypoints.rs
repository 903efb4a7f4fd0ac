//! Keypoint frames, pose sequences and the per-frame geometry used by the
//! matcher.
//!
//! Raw frames carry the 17 COCO joints in pixel coordinates. Matching uses
//! the 12 body joints only: the five facial joints are dropped, the hip
//! midpoint is moved to the origin and the shoulder-to-hip distance is scaled
//! to 1. Coordinates keep the image orientation, so with y pointing down the
//! shoulder midpoint lands at `(0, -1)` for an upright person.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RAW_JOINT_COUNT: usize = 17;
pub const BODY_JOINT_COUNT: usize = 12;
/// Length of the flattened `(x, y)` coordinate vector of a body frame.
pub const FEATURE_DIM: usize = 2 * BODY_JOINT_COUNT;

pub const DEFAULT_CONFIDENCE_FLOOR: f64 = 0.3;
pub const DEFAULT_FRAME_RATE: u32 = 25;

pub const COCO_JOINT_NAMES: [&str; RAW_JOINT_COUNT] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

/// Number of leading facial joints in COCO order (nose, eyes, ears).
pub const FACIAL_JOINT_COUNT: usize = RAW_JOINT_COUNT - BODY_JOINT_COUNT;

// Indices into the 12-joint body layout.
pub const LEFT_SHOULDER: usize = 0;
pub const RIGHT_SHOULDER: usize = 1;
pub const LEFT_HIP: usize = 6;
pub const RIGHT_HIP: usize = 7;

/// Body joints that define the normalization frame.
pub const ANCHOR_JOINTS: [usize; 4] = [LEFT_SHOULDER, RIGHT_SHOULDER, LEFT_HIP, RIGHT_HIP];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawJoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl RawJoint {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self { x, y, confidence }
    }
}

/// One video frame of COCO-17 detections in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RawKeypointFrame {
    joints: [RawJoint; RAW_JOINT_COUNT],
    frame_index: u64,
}

impl RawKeypointFrame {
    pub fn new(joints: &[RawJoint], frame_index: u64) -> Result<Self> {
        if joints.len() != RAW_JOINT_COUNT {
            return Err(Error::InvalidFrame(format!(
                "expected {RAW_JOINT_COUNT} joints, got {}",
                joints.len()
            )));
        }
        for (i, j) in joints.iter().enumerate() {
            if !j.x.is_finite() || !j.y.is_finite() {
                return Err(Error::InvalidFrame(format!(
                    "joint {} ({}) has non-finite coordinates",
                    i, COCO_JOINT_NAMES[i]
                )));
            }
            if !(0.0..=1.0).contains(&j.confidence) {
                return Err(Error::InvalidFrame(format!(
                    "joint {} ({}) confidence {} outside [0, 1]",
                    i, COCO_JOINT_NAMES[i], j.confidence
                )));
            }
        }
        let mut arr = [RawJoint::new(0.0, 0.0, 0.0); RAW_JOINT_COUNT];
        arr.copy_from_slice(joints);
        Ok(Self { joints: arr, frame_index })
    }

    /// Lifts a normalized body frame back into the raw layout. Facial joints
    /// are placed at the origin with zero confidence, valid body joints get
    /// confidence 1 and invalid ones 0.
    pub fn from_normalized(frame: &KeypointFrame) -> Self {
        let mut joints = [RawJoint::new(0.0, 0.0, 0.0); RAW_JOINT_COUNT];
        for (b, (&[x, y], &valid)) in frame.coords().iter().zip(frame.valid_mask()).enumerate() {
            joints[FACIAL_JOINT_COUNT + b] = RawJoint::new(x, y, if valid { 1.0 } else { 0.0 });
        }
        Self { joints, frame_index: frame.frame_index() }
    }

    pub fn joints(&self) -> &[RawJoint; RAW_JOINT_COUNT] {
        &self.joints
    }

    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    /// Applies `p -> scale * p + offset` to every joint.
    pub fn transformed(&self, scale: f64, offset: [f64; 2]) -> Self {
        let mut out = self.clone();
        for j in out.joints.iter_mut() {
            j.x = scale * j.x + offset[0];
            j.y = scale * j.y + offset[1];
        }
        out
    }
}

/// Normalized 12-joint body frame.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointFrame {
    coords: [[f64; 2]; BODY_JOINT_COUNT],
    valid: [bool; BODY_JOINT_COUNT],
    frame_index: u64,
}

impl KeypointFrame {
    pub fn new(
        coords: [[f64; 2]; BODY_JOINT_COUNT],
        valid: [bool; BODY_JOINT_COUNT],
        frame_index: u64,
    ) -> Result<Self> {
        if coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFrame("non-finite normalized coordinate".into()));
        }
        Ok(Self { coords, valid, frame_index })
    }

    /// Fully valid frame from coordinates.
    pub fn from_coords(coords: [[f64; 2]; BODY_JOINT_COUNT], frame_index: u64) -> Result<Self> {
        Self::new(coords, [true; BODY_JOINT_COUNT], frame_index)
    }

    /// Fully valid frame from a flat `[x0, y0, x1, y1, ...]` slice.
    pub fn from_flat(values: &[f64], frame_index: u64) -> Result<Self> {
        if values.len() != FEATURE_DIM {
            return Err(Error::InvalidFrame(format!(
                "expected {FEATURE_DIM} values, got {}",
                values.len()
            )));
        }
        let mut coords = [[0.0; 2]; BODY_JOINT_COUNT];
        for (c, v) in coords.iter_mut().zip(values.chunks_exact(2)) {
            *c = [v[0], v[1]];
        }
        Self::from_coords(coords, frame_index)
    }

    pub fn coords(&self) -> &[[f64; 2]; BODY_JOINT_COUNT] {
        &self.coords
    }

    pub fn valid_mask(&self) -> &[bool; BODY_JOINT_COUNT] {
        &self.valid
    }

    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    pub fn is_fully_valid(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }

    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.coords.iter().flatten().copied()
    }

    /// Euclidean norm of the flattened coordinate vector.
    pub fn norm(&self) -> f64 {
        self.flat().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Identity-labelled, time-ordered sequence of body frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    id: String,
    camera_tag: String,
    condition_tag: String,
    frames: Vec<KeypointFrame>,
    frame_rate: u32,
}

impl PoseSequence {
    /// Validates that the sequence lasts at least one second (`len >= frame_rate`)
    /// and that frame indices strictly increase.
    pub fn new(
        id: impl Into<String>,
        camera_tag: impl Into<String>,
        condition_tag: impl Into<String>,
        frames: Vec<KeypointFrame>,
        frame_rate: u32,
    ) -> Result<Self> {
        let id = id.into();
        if frame_rate == 0 {
            return Err(Error::InvalidSequence(format!("{id}: frame rate must be positive")));
        }
        if frames.is_empty() {
            return Err(Error::EmptySequence);
        }
        if frames.len() < frame_rate as usize {
            return Err(Error::InvalidSequence(format!(
                "{id}: {} frames is shorter than the frame rate {frame_rate}",
                frames.len()
            )));
        }
        if frames.windows(2).any(|w| w[1].frame_index <= w[0].frame_index) {
            return Err(Error::InvalidSequence(format!(
                "{id}: frame indices must be strictly increasing"
            )));
        }
        Ok(Self {
            id,
            camera_tag: camera_tag.into(),
            condition_tag: condition_tag.into(),
            frames,
            frame_rate,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn camera_tag(&self) -> &str {
        &self.camera_tag
    }

    pub fn condition_tag(&self) -> &str {
        &self.condition_tag
    }

    pub fn frames(&self) -> &[KeypointFrame] {
        &self.frames
    }

    pub fn frame_rate(&self) -> u32 {
        self.frame_rate
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn is_fully_valid(&self) -> bool {
        self.frames.iter().all(KeypointFrame::is_fully_valid)
    }
}

/// Per-frame Euclidean norms of a sequence; the scalar series the lower
/// bound is computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct NormSeries(Vec<f64>);

impl NormSeries {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for NormSeries {
    fn from(v: Vec<f64>) -> Self {
        NormSeries(v)
    }
}

fn midpoint(a: &RawJoint, b: &RawJoint) -> [f64; 2] {
    [(a.x + b.x) / 2.0, (a.y + b.y) / 2.0]
}

/// Drops the facial joints, translates the hip midpoint to the origin and
/// scales the torso (shoulder midpoint to hip midpoint) to unit length.
/// Joints below `confidence_floor` keep their transformed coordinates but are
/// flagged invalid.
pub fn normalize_frame(raw: &RawKeypointFrame, confidence_floor: f64) -> Result<KeypointFrame> {
    if !(0.0..=1.0).contains(&confidence_floor) {
        return Err(Error::InvalidConfig(format!(
            "confidence floor {confidence_floor} outside [0, 1]"
        )));
    }
    let body = &raw.joints[FACIAL_JOINT_COUNT..];
    for &a in &ANCHOR_JOINTS {
        if body[a].confidence < confidence_floor {
            return Err(Error::DegenerateFrame {
                frame_index: raw.frame_index,
                reason: format!(
                    "{} confidence {} below floor {}",
                    COCO_JOINT_NAMES[FACIAL_JOINT_COUNT + a],
                    body[a].confidence,
                    confidence_floor
                ),
            });
        }
    }
    let hip = midpoint(&body[LEFT_HIP], &body[RIGHT_HIP]);
    let shoulder = midpoint(&body[LEFT_SHOULDER], &body[RIGHT_SHOULDER]);
    let torso = (shoulder[0] - hip[0]).hypot(shoulder[1] - hip[1]);
    if !(torso > 0.0) || !torso.is_finite() {
        return Err(Error::DegenerateFrame {
            frame_index: raw.frame_index,
            reason: "zero torso length".into(),
        });
    }

    let mut coords = [[0.0; 2]; BODY_JOINT_COUNT];
    let mut valid = [false; BODY_JOINT_COUNT];
    for (i, j) in body.iter().enumerate() {
        coords[i] = [(j.x - hip[0]) / torso, (j.y - hip[1]) / torso];
        valid[i] = j.confidence >= confidence_floor;
    }
    KeypointFrame::new(coords, valid, raw.frame_index).map_err(|_| Error::DegenerateFrame {
        frame_index: raw.frame_index,
        reason: "normalization produced non-finite coordinates".into(),
    })
}

/// Fills invalid joints by linear interpolation in time between the nearest
/// valid observations of the same joint; ends are extrapolated as constants.
pub fn impute_sequence(seq: &PoseSequence) -> Result<PoseSequence> {
    let mut frames = seq.frames.clone();
    for joint in 0..BODY_JOINT_COUNT {
        let known: Vec<usize> = (0..frames.len()).filter(|&t| frames[t].valid[joint]).collect();
        if known.is_empty() {
            return Err(Error::UnimputableJoint { id: seq.id.clone(), joint });
        }
        if known.len() == frames.len() {
            continue;
        }
        let mut next = 0;
        for t in 0..frames.len() {
            if frames[t].valid[joint] {
                continue;
            }
            while next < known.len() && known[next] < t {
                next += 1;
            }
            let value = match (next.checked_sub(1).map(|p| known[p]), known.get(next)) {
                (Some(a), Some(&b)) => {
                    let ta = frames[a].frame_index as f64;
                    let tb = frames[b].frame_index as f64;
                    let alpha = (frames[t].frame_index as f64 - ta) / (tb - ta);
                    let pa = frames[a].coords[joint];
                    let pb = frames[b].coords[joint];
                    [pa[0] + alpha * (pb[0] - pa[0]), pa[1] + alpha * (pb[1] - pa[1])]
                }
                (Some(a), None) => frames[a].coords[joint],
                (None, Some(&b)) => frames[b].coords[joint],
                (None, None) => unreachable!("known is non-empty"),
            };
            frames[t].coords[joint] = value;
        }
        for f in frames.iter_mut() {
            f.valid[joint] = true;
        }
    }
    Ok(PoseSequence { frames, ..seq.clone() })
}

/// Euclidean distance between the 24-dimensional coordinate vectors of two
/// fully valid frames.
pub fn frame_distance(a: &KeypointFrame, b: &KeypointFrame) -> f64 {
    debug_assert!(a.is_fully_valid() && b.is_fully_valid());
    a.flat()
        .zip(b.flat())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn norm_series(seq: &PoseSequence) -> NormSeries {
    NormSeries(seq.frames.iter().map(KeypointFrame::norm).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn upright_raw(frame_index: u64) -> RawKeypointFrame {
        let mut joints = vec![RawJoint::new(110.0, 60.0, 0.9); RAW_JOINT_COUNT];
        let body = [
            (100.0, 100.0), // left shoulder
            (120.0, 100.0), // right shoulder
            (95.0, 150.0),
            (125.0, 150.0),
            (92.0, 190.0),
            (128.0, 190.0),
            (100.0, 200.0), // left hip
            (120.0, 200.0), // right hip
            (101.0, 260.0),
            (119.0, 260.0),
            (102.0, 320.0),
            (118.0, 320.0),
        ];
        for (i, (x, y)) in body.into_iter().enumerate() {
            joints[FACIAL_JOINT_COUNT + i] = RawJoint::new(x, y, 0.95);
        }
        RawKeypointFrame::new(&joints, frame_index).unwrap()
    }

    fn seq_of(frames: Vec<KeypointFrame>) -> PoseSequence {
        PoseSequence::new("p", "cam0", "c", frames, 1).unwrap()
    }

    #[test]
    fn hip_and_shoulder_midpoints_map_to_canonical_positions() {
        let f = normalize_frame(&upright_raw(0), 0.3).unwrap();
        let c = f.coords();
        let hip = [(c[LEFT_HIP][0] + c[RIGHT_HIP][0]) / 2.0, (c[LEFT_HIP][1] + c[RIGHT_HIP][1]) / 2.0];
        let sh = [
            (c[LEFT_SHOULDER][0] + c[RIGHT_SHOULDER][0]) / 2.0,
            (c[LEFT_SHOULDER][1] + c[RIGHT_SHOULDER][1]) / 2.0,
        ];
        assert_eq!(hip, [0.0, 0.0]);
        assert_eq!(sh, [0.0, -1.0]);
        // hand-applied map: ((x - 110) / 100, (y - 200) / 100)
        assert_eq!(c[LEFT_SHOULDER], [-0.1, -1.0]);
        assert_eq!(c[11], [0.08, 1.2]);
        assert!(f.is_fully_valid());
    }

    #[test]
    fn normalized_frame_is_a_fixed_point() {
        let mut coords = [[0.0; 2]; BODY_JOINT_COUNT];
        coords[LEFT_SHOULDER] = [-0.25, -1.0];
        coords[RIGHT_SHOULDER] = [0.25, -1.0];
        coords[LEFT_HIP] = [-0.5, 0.0];
        coords[RIGHT_HIP] = [0.5, 0.0];
        coords[3] = [0.3, -0.4];
        coords[10] = [-0.2, 1.7];
        let f = KeypointFrame::from_coords(coords, 7).unwrap();
        let again = normalize_frame(&RawKeypointFrame::from_normalized(&f), 0.3).unwrap();
        assert_eq!(again, f);
    }

    #[test]
    fn collapsed_frame_is_degenerate() {
        let joints = vec![RawJoint::new(5.0, 5.0, 1.0); RAW_JOINT_COUNT];
        let raw = RawKeypointFrame::new(&joints, 3).unwrap();
        assert!(matches!(
            normalize_frame(&raw, 0.3),
            Err(Error::DegenerateFrame { frame_index: 3, .. })
        ));
    }

    #[test]
    fn low_confidence_anchor_is_degenerate_and_limbs_are_masked() {
        let mut joints = upright_raw(0).joints().to_vec();
        joints[FACIAL_JOINT_COUNT + 9].confidence = 0.1;
        let f = normalize_frame(&RawKeypointFrame::new(&joints, 0).unwrap(), 0.3).unwrap();
        assert!(!f.valid_mask()[9]);
        assert_eq!(f.valid_mask().iter().filter(|v| !**v).count(), 1);

        joints[FACIAL_JOINT_COUNT + LEFT_HIP].confidence = 0.2;
        let raw = RawKeypointFrame::new(&joints, 0).unwrap();
        assert!(matches!(normalize_frame(&raw, 0.3), Err(Error::DegenerateFrame { .. })));
    }

    #[test]
    fn raw_frame_validation() {
        let ok = RawJoint::new(0.0, 0.0, 0.5);
        assert!(RawKeypointFrame::new(&[ok; 16], 0).is_err());
        let mut js = vec![ok; 17];
        js[4].confidence = 1.5;
        assert!(RawKeypointFrame::new(&js, 0).is_err());
        js[4] = RawJoint::new(f64::NAN, 0.0, 0.5);
        assert!(RawKeypointFrame::new(&js, 0).is_err());
    }

    #[test]
    fn sequence_invariants() {
        let f = |i| KeypointFrame::from_coords([[0.0; 2]; 12], i).unwrap();
        assert!(PoseSequence::new("a", "c", "x", vec![f(0), f(1)], 3).is_err());
        assert!(PoseSequence::new("a", "c", "x", vec![f(0), f(0), f(1)], 3).is_err());
        assert!(PoseSequence::new("a", "c", "x", vec![], 1).is_err());
        assert!(PoseSequence::new("a", "c", "x", vec![f(0), f(2), f(5)], 3).is_ok());
    }

    fn frame_with_joint(index: u64, joint: usize, x: f64, valid: bool) -> KeypointFrame {
        let mut coords = [[0.0; 2]; BODY_JOINT_COUNT];
        coords[joint] = [x, 0.0];
        let mut mask = [true; BODY_JOINT_COUNT];
        mask[joint] = valid;
        KeypointFrame::new(coords, mask, index).unwrap()
    }

    #[test]
    fn imputation_interpolates_midpoint() {
        let seq = seq_of(vec![
            frame_with_joint(0, 4, 0.0, true),
            frame_with_joint(1, 4, 99.0, false),
            frame_with_joint(2, 4, 1.0, true),
        ]);
        let out = impute_sequence(&seq).unwrap();
        assert_eq!(out.frames()[1].coords()[4], [0.5, 0.0]);
        assert!(out.is_fully_valid());
    }

    #[test]
    fn imputation_uses_frame_time_and_constant_ends() {
        let seq = seq_of(vec![
            frame_with_joint(0, 2, 9.0, false),
            frame_with_joint(1, 2, 2.0, true),
            frame_with_joint(2, 2, 9.0, false),
            frame_with_joint(5, 2, 8.0, true),
            frame_with_joint(6, 2, 9.0, false),
        ]);
        let out = impute_sequence(&seq).unwrap();
        let xs: Vec<f64> = out.frames().iter().map(|f| f.coords()[2][0]).collect();
        assert_eq!(xs, vec![2.0, 2.0, 3.5, 8.0, 8.0]);
    }

    #[test]
    fn imputation_identity_and_failure() {
        let seq = seq_of(vec![frame_with_joint(0, 1, 1.0, true), frame_with_joint(1, 1, 2.0, true)]);
        assert_eq!(impute_sequence(&seq).unwrap(), seq);

        let bad = seq_of(vec![frame_with_joint(0, 3, 1.0, false), frame_with_joint(1, 3, 2.0, false)]);
        assert_eq!(
            impute_sequence(&bad),
            Err(Error::UnimputableJoint { id: "p".into(), joint: 3 })
        );
    }

    #[test]
    fn frame_distance_basics() {
        let a = frame_with_joint(0, 5, 0.0, true);
        assert_eq!(frame_distance(&a, &a), 0.0);
        let b = frame_with_joint(0, 5, 0.75, true);
        assert_eq!(frame_distance(&a, &b), 0.75);
    }

    #[test]
    fn norm_series_three_four_five() {
        let mut coords = [[0.0; 2]; BODY_JOINT_COUNT];
        coords[2] = [3.0, 0.0];
        coords[9] = [0.0, 4.0];
        let f = KeypointFrame::from_coords(coords, 0).unwrap();
        let z = KeypointFrame::from_coords([[0.0; 2]; 12], 1).unwrap();
        let s = norm_series(&seq_of(vec![f, z]));
        assert_eq!(s.values(), &[5.0, 0.0]);
    }
}
