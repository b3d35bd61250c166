//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The graph is not connected: the Laplacian kernel has dimension > 1.
    #[error("graph is disconnected: eigenvalue 0 has multiplicity {multiplicity}")]
    DisconnectedGraph { multiplicity: usize },

    #[error("invalid edge ({i}, {j}): {reason}")]
    InvalidEdge {
        i: usize,
        j: usize,
        reason: &'static str,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    /// An iterate left the representable range, usually a symptom of an
    /// underestimated smoothness constant.
    #[error("non-finite {what} at iteration {iteration} (check L_psi)")]
    NonFiniteIterate {
        what: &'static str,
        iteration: usize,
    },

    /// A batched operation was requested from an oracle without a sampler.
    #[error("oracle {node} has no stochastic sampler")]
    NoStochasticSupport { node: usize },

    /// The batch-size rule asked for more samples per iteration than the cap.
    #[error("batch size {requested} exceeds cap {cap} at iteration {iteration} (eps too small for this instance)")]
    BatchOverflow {
        requested: u64,
        cap: u64,
        iteration: usize,
    },

    #[error("histogram row {row} is not a probability vector: {reason}")]
    NotASimplex { row: usize, reason: String },

    #[error("cost matrix must be square and match the histogram dimension ({got})")]
    NonSquareCost { got: String },

    #[error("tail check needs at least {min} samples, got {got}")]
    TooFewSamples { got: usize, min: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
