use thiserror::Error;

/// Errors raised by the pipeline stages.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("stream `{0}` is empty")]
    EmptyStream(String),
    #[error("stream `{stream}` has non-monotone timestamps at sample {index}")]
    NonMonotoneTimestamps { stream: String, index: usize },
    #[error("max_gap must be positive, got {0}")]
    InvalidMaxGap(f64),
    #[error("joint vector has {got} entries, chain layout expects {expected}")]
    DofMismatch { expected: usize, got: usize },
    #[error("no valid depth in the {window}x{window} neighbourhood of ({u}, {v})")]
    NoValidDepth { u: f64, v: f64, window: usize },
    #[error("pixel ({u}, {v}) lies outside the {width}x{height} depth grid")]
    PixelOutOfGrid { u: f64, v: f64, width: usize, height: usize },
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("point has z = {0}, behind the camera")]
    BehindCamera(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("episode has no frames")]
    EmptyEpisode,
    #[error("Beta shape parameters must be positive, got ({alpha}, {beta})")]
    InvalidShapeParam { alpha: f64, beta: f64 },
    #[error("probability must lie in [0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("unknown token at byte {position}: {fragment:?}")]
    UnknownToken { position: usize, fragment: String },
    #[error("token id {0} is not in the vocabulary")]
    UnknownTokenId(usize),
    #[error("variant {variant} does not exist for scenario `{scenario}`")]
    InvalidVariant { scenario: String, variant: usize },
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("failed to load artifact: {0}")]
    ArtifactLoad(String),
    #[error("frame {index} is outside an episode of {len} frames")]
    FrameOutOfRange { index: usize, len: usize },
    #[error("i/o: {0}")]
    Io(String),
    #[error("malformed {what}: {detail}")]
    Parse { what: String, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
