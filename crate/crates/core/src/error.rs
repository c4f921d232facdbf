use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("block {block} has zero expected degree")]
    ZeroExpectedDegree { block: usize },

    #[error("network is disconnected")]
    Disconnected,

    #[error("node {node} is isolated (degree 0)")]
    IsolatedNode { node: usize },

    #[error("eigensolver did not converge within {iterations} iterations (residual {residual:e})")]
    EigenNoConvergence { iterations: usize, residual: f64 },

    #[error("fixed point at z = {z} did not converge within {iterations} iterations (residual {residual:e})")]
    FixedPointNoConvergence {
        z: String,
        iterations: usize,
        residual: f64,
    },

    #[error("singular denominator in fixed-point map at z = {z}")]
    SingularPoint { z: String },

    #[error("no support boundary bracketed in scan window [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("divergent convergence bound: |mu2| = {0} >= 1")]
    DivergentBound(f64),

    #[error("node {node} holds no local examples")]
    EmptyShard { node: usize },

    #[error("need at least {needed} usable rows, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("pole c = {pole} lies inside the data range (max delta {max_delta})")]
    PoleInsideData { pole: f64, max_delta: f64 },

    #[error("bifurcation not bracketed: {0}")]
    OutOfRange(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
