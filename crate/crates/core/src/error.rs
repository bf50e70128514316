use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the discovery pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vertex ordinal {ordinal} out of range for {n} vertices")]
    VertexOutOfRange { ordinal: usize, n: usize },

    #[error("duplicate vertex {0} in atom arguments")]
    DuplicateVertex(usize),

    #[error("conditioning set contains an endpoint ({0})")]
    CondSetContainsEndpoint(usize),

    #[error("truth value {0} outside [0, 1]")]
    TruthOutOfRange(f64),

    #[error("invalid vertex set: {0}")]
    InvalidVertexSet(String),

    #[error("at least two vertices are required, got {0}")]
    TooFewVertices(usize),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("column {0} has zero variance")]
    ZeroVariance(String),

    #[error("degenerate conditioning: vertices {0} and {1} are perfectly correlated")]
    DegenerateConditioning(usize, usize),

    #[error("saturated correlation |r| = {0} >= 1")]
    SaturatedCorrelation(f64),

    #[error("insufficient samples: m = {m} with conditioning set size {s}")]
    InsufficientSamples { m: usize, s: usize },

    #[error("missing marginal test for pair ({0}, {1})")]
    MissingMarginalTest(usize, usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown model variant '{0}'")]
    UnknownVariant(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered during inference (potential {0})")]
    NonFinite(usize),

    #[error("missing evidence: {0}")]
    MissingEvidence(String),

    #[error("infeasible knowledge-base corruption: {0}")]
    InfeasibleCorruption(String),

    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
