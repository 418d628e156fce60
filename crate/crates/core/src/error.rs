use thiserror::Error;

use crate::geometry::RigidTransform;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("every vertex lies behind the camera near plane")]
    AllBehindCamera,
    #[error("projection falls entirely outside the image")]
    OutsideImage,
    #[error("segment contains no valid depth pixels")]
    EmptySegment,
    #[error("segment has fewer than 4 non-collinear points")]
    DegenerateSegment,
    #[error("no congruent 4-point sets found within budget")]
    NoCongruentSets,
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("object settled outside the resting surface bounds")]
    NoSupport { projected: RigidTransform },
    #[error("search tree already at maximum depth")]
    MaxDepth,
    #[error("object {0} has no pose hypotheses")]
    EmptyHypotheses(usize),
    #[error("no view passed the confidence threshold")]
    NoConfidentView,
    #[error("point cloud empty after filtering")]
    EmptyAfterFilter,
    #[error("scene generation failed after {0} attempts")]
    GenerationFailed(usize),
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn json(path: impl AsRef<std::path::Path>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}
