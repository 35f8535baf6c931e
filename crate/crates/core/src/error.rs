use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A problem with one layer of a network's shape chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeError {
    /// Index of the offending layer, or `None` for whole-network problems.
    pub layer: Option<usize>,
    pub message: String,
}

impl fmt::Display for ShapeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.layer {
            Some(i) => write!(f, "layer {i}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid network: {}", join(.0))]
    InvalidNetwork(Vec<ShapeError>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("piecewise-linear domains differ: [{0}, {1}] vs [{2}, {3}]")]
    DomainMismatch(f64, f64, f64, f64),

    #[error("segment cap exceeded: {count} breakpoints after layer {layer} (cap {cap})")]
    SegmentExplosion {
        layer: usize,
        count: usize,
        cap: usize,
    },

    #[error("infeasible precondition: dimension {0} has an empty interval")]
    InfeasiblePrecondition(usize),

    #[error(transparent)]
    Parse(#[from] crate::lang::ParseError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join(errors: &[ShapeError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
