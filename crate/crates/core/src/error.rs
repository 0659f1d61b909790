use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the egocorr pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config line {line}: {message}")]
    ConfigParse { line: usize, message: String },
    #[error("invalid config: {0}")]
    ConfigInvariant(String),
    #[error("{path}: {message}")]
    Frame { path: PathBuf, message: String },
    #[error("sequence too short: {0} frame(s), need at least 2")]
    SequenceTooShort(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("insufficient matches: {0} surviving track(s), need at least 4")]
    InsufficientMatches(usize),
    #[error("degenerate geometry: no homography with at least 4 inliers")]
    DegenerateGeometry,
    #[error("median window must be odd and positive, got {0}")]
    EvenWindow(usize),
    #[error("interval [{begin}, {end}) outside pattern of length {len}")]
    OutOfRange { begin: usize, end: usize, len: usize },
    #[error("trajectory too short for K: length {len} < K = {k}")]
    TooShortForK { len: usize, k: usize },
    #[error("sketch piece counts differ: {0} vs {1}")]
    SketchMismatch(usize, usize),
    #[error("degenerate ground truth: all pixels share one label")]
    DegenerateTruth,
    #[error("prior training: {0}")]
    Training(String),
    #[error("singular covariance in discriminant fit")]
    SingularCovariance,
    #[error("empty repository: no candidates")]
    EmptyRepository,
    #[error("no relevant items (R = 0)")]
    NoRelevant,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid synthetic spec: {0}")]
    SynthSpec(String),
    #[error("{path}: malformed file: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
