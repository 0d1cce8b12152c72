//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point {point:?} lies outside the tabulated domain")]
    OutOfDomain { point: Vec<f64> },

    #[error("trajectory {traj} left omega at step {step} (strict escape policy)")]
    Escaped { traj: usize, step: usize },

    #[error("no trajectory remained inside omega at step {step}; drop-policy estimate is degenerate")]
    DegenerateEstimate { step: usize },

    #[error("degenerate normalization: {0}")]
    DegenerateNormalization(String),

    #[error("at grid node {node}: {source}")]
    AtNode {
        node: usize,
        #[source]
        source: std::boxed::Box<Error>,
    },

    #[error("bad density grid file: {0}")]
    GridFormat(String),

    #[error("bad trajectory file: {0}")]
    TrajectoryFormat(String),

    #[error("config validation: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attach the grid node a solver error occurred at.
    pub fn at_node(self, node: usize) -> Self {
        Error::AtNode {
            node,
            source: std::boxed::Box::new(self),
        }
    }

    /// Errors that indicate a bad request rather than a failed run.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::Validation(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
