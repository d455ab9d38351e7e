use std::path::PathBuf;

use thiserror::Error;

/// Everything the engine can fail with.
///
/// Errors split into two families that the CLI maps to distinct exit codes:
/// input problems (bad arguments, shapes, files) and numerical failures
/// (non-finite states, losses or gradients).
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} is outside the valid domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    Shape {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("malformed {kind} file {path}: {reason}")]
    Format {
        kind: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("sampling diverged at step {step}: non-finite state")]
    SamplingDiverged { step: usize },

    #[error("training diverged at iteration {iteration}: non-finite {what}")]
    TrainingDiverged { iteration: usize, what: &'static str },

    #[error("non-finite gradient in parameter group `{group}`")]
    NonFiniteGradient { group: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for divergence and non-finite failures.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SamplingDiverged { .. }
                | Error::TrainingDiverged { .. }
                | Error::NonFiniteGradient { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(context: &'static str, expected: &[usize], got: &[usize]) -> Self {
        Error::Shape {
            context,
            expected: expected.to_vec(),
            got: got.to_vec(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
