use thiserror::Error;

pub type Result<T, E = StvgError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum StvgError {
    #[error("box out of bounds: {0}")]
    BoxOutOfBounds(String),
    #[error("latent shape error: expected {expected:?}, got {got:?}")]
    LatentShape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("context overflow: {tokens} tokens exceed the context of {limit}")]
    ContextOverflow { tokens: usize, limit: usize },
    #[error("vocabulary error: no entry for {0:?}")]
    Vocabulary(String),
    #[error("gradient unsupported by backend {0}")]
    GradientUnsupported(String),
    #[error("fixture miss: clip {clip_id}, prompt sha256 {prompt_sha256}")]
    FixtureMiss {
        clip_id: String,
        prompt_sha256: String,
    },
    #[error("fixture format: {0}")]
    FixtureFormat(String),
    #[error("no samples")]
    NoSamples,
    #[error("no proposals")]
    NoProposals,
    #[error("invalid k: {k} for {len} frames")]
    InvalidK { k: usize, len: usize },
    #[error("empty intersection: track {0} has no box inside the span")]
    EmptyIntersection(String),
    #[error("insufficient samples: {got} < {needed}")]
    InsufficientSamples { got: usize, needed: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
