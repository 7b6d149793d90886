use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate 6D rotation axes")]
    DegenerateAxes,
    #[error("matrix too close to singular for SVD orthogonalization")]
    DegenerateMatrix,
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("sequence has no valid tokens")]
    EmptySequence,
    #[error("non-finite loss encountered")]
    NonFiniteLoss,
    #[error("no viewable pose found after {0} attempts")]
    UnviewableScene(usize),
    #[error("need at least {needed} correspondences, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate correspondence configuration")]
    DegenerateConfiguration,
    #[error("singular normal equations")]
    SingularNormalEquations,
    #[error("no consensus: best hypothesis has {0} inliers")]
    NoConsensus(usize),
    #[error("bad magic in {0}")]
    BadMagic(String),
    #[error("truncated file: {0}")]
    TruncatedFile(String),
    #[error("non-finite value in {0}")]
    NonFiniteValue(String),
    #[error("pose rotation is not orthonormal with det +1")]
    NotARotation,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by numerics rather than bad input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateAxes
                | Error::DegenerateMatrix
                | Error::NonFiniteLoss
                | Error::SingularNormalEquations
                | Error::NoConsensus(_)
                | Error::DegenerateConfiguration
                | Error::UnviewableScene(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
