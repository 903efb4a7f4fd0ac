use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate frame {frame_index}: {reason}")]
    DegenerateFrame { frame_index: u64, reason: String },

    #[error("joint {joint} is invalid in every frame of sequence {id:?}")]
    UnimputableJoint { id: String, joint: usize },

    #[error("empty sequence")]
    EmptySequence,

    #[error("warping window w={w} has no connected path through a {m}x{n} grid")]
    InfeasibleBand { m: usize, n: usize, w: usize },

    #[error("gallery is empty")]
    EmptyGallery,

    #[error("query identities missing from gallery: {0:?}")]
    MissingGroundTruth(Vec<String>),

    #[error("invalid keypoint frame: {0}")]
    InvalidFrame(String),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
