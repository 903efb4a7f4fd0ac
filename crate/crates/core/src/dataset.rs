//! JSONL dataset records.
//!
//! Raw records carry 17 COCO joints per frame as `[x, y, confidence]`
//! triples. Normalized records (written by ingestion) carry the 12 body
//! joints as `[x, y]` pairs and are tagged with `"format": "normalized-12"`.
//! Readers accept either kind line by line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keypoints::{
    impute_sequence, normalize_frame, KeypointFrame, PoseSequence, RawJoint, RawKeypointFrame, BODY_JOINT_COUNT,
    RAW_JOINT_COUNT,
};

pub const NORMALIZED_FORMAT: &str = "normalized-12";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub camera_tag: String,
    pub condition_tag: String,
    pub frame_rate: u32,
    /// One entry per frame, 17 `[x, y, confidence]` triples each.
    pub frames: Vec<Vec<[f64; 3]>>,
    /// Source frame numbers; positions `0..len` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_indices: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedRecord {
    pub format: String,
    pub id: String,
    pub camera_tag: String,
    pub condition_tag: String,
    pub frame_rate: u32,
    pub frame_indices: Vec<u64>,
    /// One entry per frame, 12 body `[x, y]` pairs each.
    pub frames: Vec<Vec<[f64; 2]>>,
}

/// Either record kind, as read from a line.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyRecord {
    Raw(DatasetRecord),
    Normalized(NormalizedRecord),
}

impl DatasetRecord {
    pub fn raw_frames(&self) -> Result<Vec<RawKeypointFrame>> {
        if self.frames.is_empty() {
            return Err(Error::EmptySequence);
        }
        if let Some(ix) = &self.frame_indices {
            if ix.len() != self.frames.len() {
                return Err(Error::InvalidSequence(format!(
                    "{}: {} frame indices for {} frames",
                    self.id,
                    ix.len(),
                    self.frames.len()
                )));
            }
        }
        self.frames
            .iter()
            .enumerate()
            .map(|(t, joints)| {
                let idx = self.frame_indices.as_ref().map_or(t as u64, |ix| ix[t]);
                let joints: Vec<RawJoint> = joints.iter().map(|&[x, y, c]| RawJoint::new(x, y, c)).collect();
                RawKeypointFrame::new(&joints, idx)
            })
            .collect()
    }

    /// Normalizes every frame and fills low-confidence joints.
    pub fn to_sequence(&self, confidence_floor: f64) -> Result<PoseSequence> {
        let frames = self
            .raw_frames()?
            .iter()
            .map(|f| normalize_frame(f, confidence_floor))
            .collect::<Result<Vec<_>>>()?;
        let seq = PoseSequence::new(&self.id, &self.camera_tag, &self.condition_tag, frames, self.frame_rate)?;
        impute_sequence(&seq)
    }

    pub fn from_raw_frames(
        id: &str,
        camera_tag: &str,
        condition_tag: &str,
        frame_rate: u32,
        frames: &[RawKeypointFrame],
    ) -> Self {
        let contiguous = frames.iter().enumerate().all(|(t, f)| f.frame_index() == t as u64);
        DatasetRecord {
            id: id.into(),
            camera_tag: camera_tag.into(),
            condition_tag: condition_tag.into(),
            frame_rate,
            frames: frames
                .iter()
                .map(|f| f.joints().iter().map(|j| [j.x, j.y, j.confidence]).collect())
                .collect(),
            frame_indices: (!contiguous).then(|| frames.iter().map(RawKeypointFrame::frame_index).collect()),
        }
    }
}

impl NormalizedRecord {
    pub fn from_sequence(seq: &PoseSequence) -> Self {
        NormalizedRecord {
            format: NORMALIZED_FORMAT.into(),
            id: seq.id().into(),
            camera_tag: seq.camera_tag().into(),
            condition_tag: seq.condition_tag().into(),
            frame_rate: seq.frame_rate(),
            frame_indices: seq.frames().iter().map(KeypointFrame::frame_index).collect(),
            frames: seq.frames().iter().map(|f| f.coords().to_vec()).collect(),
        }
    }

    pub fn to_sequence(&self) -> Result<PoseSequence> {
        if self.frame_indices.len() != self.frames.len() {
            return Err(Error::InvalidSequence(format!("{}: frame index count mismatch", self.id)));
        }
        let frames = self
            .frames
            .iter()
            .zip(&self.frame_indices)
            .map(|(joints, &idx)| {
                let coords: [[f64; 2]; BODY_JOINT_COUNT] = joints.as_slice().try_into().map_err(|_| {
                    Error::InvalidFrame(format!("expected {BODY_JOINT_COUNT} joints, got {}", joints.len()))
                })?;
                KeypointFrame::from_coords(coords, idx)
            })
            .collect::<Result<Vec<_>>>()?;
        PoseSequence::new(&self.id, &self.camera_tag, &self.condition_tag, frames, self.frame_rate)
    }
}

impl AnyRecord {
    pub fn id(&self) -> &str {
        match self {
            AnyRecord::Raw(r) => &r.id,
            AnyRecord::Normalized(r) => &r.id,
        }
    }

    pub fn to_sequence(&self, confidence_floor: f64) -> Result<PoseSequence> {
        match self {
            AnyRecord::Raw(r) => r.to_sequence(confidence_floor),
            AnyRecord::Normalized(r) => r.to_sequence(),
        }
    }
}

/// A line that could not be decoded.
#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn parse_line(line: &str) -> std::result::Result<AnyRecord, String> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if value.get("format").and_then(|f| f.as_str()) == Some(NORMALIZED_FORMAT) {
        return serde_json::from_value(value).map(AnyRecord::Normalized).map_err(|e| e.to_string());
    }
    let rec: DatasetRecord = serde_json::from_value(value).map_err(|e| e.to_string())?;
    if rec.frames.is_empty() {
        return Err("record has no frames".into());
    }
    if let Some(bad) = rec.frames.iter().position(|f| f.len() != RAW_JOINT_COUNT) {
        return Err(format!(
            "frame {bad} has {} joints, expected {RAW_JOINT_COUNT}",
            rec.frames[bad].len()
        ));
    }
    Ok(AnyRecord::Raw(rec))
}

/// Reads every non-blank line; fails on the first malformed one, reporting
/// its 1-based line number.
pub fn read_records<R: BufRead>(reader: R) -> std::result::Result<Vec<(usize, AnyRecord)>, ReadError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_line(&line).map_err(|message| ReadError::Parse { line: i + 1, message })?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

pub fn write_jsonl<W: Write, T: Serialize>(mut writer: W, records: &[T]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_record(id: &str) -> DatasetRecord {
        let mut frame = vec![[0.0, 0.0, 0.9]; RAW_JOINT_COUNT];
        frame[5] = [10.0, 10.0, 0.9];
        frame[6] = [30.0, 10.0, 0.9];
        frame[11] = [10.0, 60.0, 0.9];
        frame[12] = [30.0, 60.0, 0.9];
        frame[9] = [5.0, 40.0, 0.9];
        let mut occluded = frame.clone();
        occluded[9] = [50.0, 40.0, 0.1];
        DatasetRecord {
            id: id.into(),
            camera_tag: "cam1".into(),
            condition_tag: "clothesA-RGB".into(),
            frame_rate: 2,
            frames: vec![frame.clone(), occluded, frame],
            frame_indices: None,
        }
    }

    #[test]
    fn raw_record_round_trips_through_normalized_form() {
        let rec = raw_record("p1");
        let seq = rec.to_sequence(0.3).unwrap();
        assert!(seq.is_fully_valid());
        assert_eq!(seq.len(), 3);
        let line = serde_json::to_string(&NormalizedRecord::from_sequence(&seq)).unwrap();
        let back = parse_line(&line).unwrap().to_sequence(0.3).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn field_names_are_stable() {
        let v = serde_json::to_value(raw_record("x")).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, vec!["camera_tag", "condition_tag", "frame_rate", "frames", "id"]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let good = serde_json::to_string(&raw_record("a")).unwrap();
        let text = format!("{good}\n\n{{not json\n{good}\n");
        match read_records(text.as_bytes()) {
            Err(ReadError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_joint_count_is_rejected() {
        let mut rec = raw_record("a");
        rec.frames[1].pop();
        assert!(parse_line(&serde_json::to_string(&rec).unwrap()).is_err());
    }
}
