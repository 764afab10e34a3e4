use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed Y4M header: {0}")]
    MalformedHeader(String),
    #[error("unsupported colorspace `{0}` (expected C420, C422 or C444)")]
    UnsupportedColorspace(String),
    #[error("truncated frame {index}: expected {expected} bytes, got {got}")]
    TruncatedFrame {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("malformed frame marker at frame {0}")]
    MalformedFrameMarker(usize),
    #[error("frame too small: {width}x{height}, need at least {min_width}x{min_height}")]
    FrameTooSmall {
        width: usize,
        height: usize,
        min_width: usize,
        min_height: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("all frames were filtered out")]
    AllFramesFiltered,
    #[error("k = {k} exceeds the number of points ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("bad magic in model file")]
    BadMagic,
    #[error("unsupported model version {0}")]
    VersionMismatch(u32),
    #[error("corrupt model: {0}")]
    CorruptNode(String),
    #[error("supervised scoring requires a forest model")]
    ModelMissing,
    #[error("group LASSO did not converge after {iterations} iterations (last relative change {change:e})")]
    NonConvergence { iterations: usize, change: f64 },
    #[error("matcher `{0}` unavailable: {1}")]
    MatcherUnavailable(String, String),
    #[error("manifest error: {0}")]
    ManifestError(String),
    #[error("no comparison frames left after near-duplicate exclusion")]
    NoComparisonFrames,
    #[error("empty stream")]
    EmptyStream,
    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
