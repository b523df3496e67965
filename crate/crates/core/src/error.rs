use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    DimensionMismatch(String),

    #[error("vector norm {norm:e} is at or below the guard {eps:e}")]
    NearZeroNorm { norm: f64, eps: f64 },

    #[error("dropout rate {0} is outside [0, 1)")]
    InvalidRate(f64),

    #[error("backward already ran on this tape; record a new forward pass first")]
    DoubleBackward,

    #[error("backward requires a scalar loss node, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,

    #[error("unknown token {0:?}")]
    UnknownToken(String),

    #[error("sequence of length {len} exceeds the limit {max}")]
    TooLong { len: usize, max: usize },

    #[error("agent {agent} left the grid at ({x},{y})")]
    OffGrid { agent: usize, x: i64, y: i64 },

    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("query has no blank token")]
    NoBlank,

    #[error("expected 10 candidates, got {0}")]
    BadCandidateCount(usize),

    #[error("direct prediction requires slots tied to candidates")]
    UntiedKeys,

    #[error("loss diverged at epoch {epoch}, update {update}: {loss}")]
    DivergedLoss { epoch: usize, update: usize, loss: f64 },

    #[error("no runs to select from")]
    EmptyRuns,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
