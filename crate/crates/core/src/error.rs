use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model or config field violates one of its invariants. `field` is a
    /// dotted path such as `transition[2][1]` or `federation.lr_theta`.
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("linear solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    Solver { residual: f64, tolerance: f64 },

    /// An agent asked for a cost signal outside its assigned set.
    #[error("agent may not access cost signal {requested} (assigned: {allowed:?})")]
    ConstraintAccess { requested: usize, allowed: Vec<usize> },

    #[error("metric {metric} is undefined: {reason}")]
    UndefinedMetric { metric: &'static str, reason: String },

    #[error("malformed trajectory batch: {0}")]
    MalformedBatch(String),

    #[error("environment: {0}")]
    Env(String),

    #[error("feasibility screen failed after {retries} retries")]
    Infeasible { retries: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
