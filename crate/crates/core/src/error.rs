use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("infeasible mesh sizing: {0}")]
    InfeasibleSizing(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("point ({x}, {y}) is outside the mesh (nearest triangle at distance {distance:e}, tolerance {tolerance:e})")]
    OutsideDomain {
        x: f64,
        y: f64,
        distance: f64,
        tolerance: f64,
    },

    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: String },

    #[error("malformed schedule {text:?}: {reason}")]
    Schedule { text: String, reason: String },

    #[error("solver state became non-finite at step {step}")]
    SolverDiverged { step: usize },

    #[error("training loss became non-finite at step {step}")]
    TrainingDiverged { step: usize },

    #[error("parse error in {what}: {reason}")]
    Parse { what: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            what: what.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
