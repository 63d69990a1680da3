use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed STL: {0}")]
    MalformedStl(String),

    #[error("mesh has no triangles")]
    EmptyMesh,

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("rotation is not proper orthonormal (det = {det:.3e}, orthogonality error = {orth:.3e})")]
    NonRigid { det: f64, orth: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point at depth {depth:.6} mm is at or behind the source")]
    BehindSource { depth: f64 },

    #[error("projected footprint does not cover any pixel of the image")]
    EmptyFootprint,

    #[error("mask has no foreground pixels")]
    EmptyMask,

    #[error("contour has no points")]
    EmptyContour,

    #[error("image {path} is not 8-bit grayscale ({kind})")]
    NonGrayscale { path: PathBuf, kind: String },

    #[error("image decode error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed CSV in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("view {view}: {source}")]
    View {
        view: String,
        #[source]
        source: Box<Error>,
    },

    #[error("registration found no pose that renders inside the image")]
    NoValidPose,

    #[error("no silhouette-rim vertices found")]
    NoRimVertices,

    #[error("scale search hit the bracket edge at {scale:.4} without an interior minimum")]
    BracketExhausted { scale: f64 },

    #[error("degenerate correspondence set (rank {rank} < 3)")]
    DegenerateCorrespondences { rank: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("no ground truth: {0} does not exist")]
    NoGroundTruth(PathBuf),

    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_view(view: impl Into<String>, source: Error) -> Self {
        Error::View {
            view: view.into(),
            source: Box::new(source),
        }
    }

    pub(crate) fn in_stage(stage: impl Into<String>, source: Error) -> Self {
        match source {
            // keep the innermost stage name
            Error::Stage { .. } => source,
            _ => Error::Stage {
                stage: stage.into(),
                source: Box::new(source),
            },
        }
    }

    /// The error underneath any stage / view wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::View { source, .. } => source.root(),
            e => e,
        }
    }

    /// Process exit code for command-line use: 2 for configuration errors,
    /// 4 for failures reading or writing files (including malformed input
    /// files), 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config { .. } => 2,
            Error::Io { .. }
            | Error::Json { .. }
            | Error::Csv { .. }
            | Error::Image { .. }
            | Error::MalformedStl(_)
            | Error::NonGrayscale { .. } => 4,
            _ => 3,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
