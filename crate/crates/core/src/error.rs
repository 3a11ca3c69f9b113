use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("invalid shape {shape:?}: {reason}")]
    BadShape { shape: Vec<usize>, reason: String },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("power iteration did not converge after {iters} iterations (relative change {rel_change:e})")]
    NonConvergence { iters: usize, rel_change: f64 },

    #[error("quadrature tail did not decay: {0}")]
    TailNotDecaying(String),

    #[error("ActNorm scale {value:e} at index {index} is too close to zero")]
    SingularScale { index: usize, value: f64 },

    #[error("blur kernel must have odd side lengths, got {rows}x{cols}")]
    BadKernel { rows: usize, cols: usize },

    #[error("operation requires a {expected} operator")]
    WrongOperator { expected: &'static str },

    #[error("prior does not provide {0}")]
    CapabilityMissing(&'static str),

    #[error("series has zero variance")]
    DegenerateSeries,

    #[error("input is empty")]
    Empty,

    #[error("training diverged at step {step}")]
    TrainingDiverged { step: usize },

    #[error("chain diverged at iteration {iteration}: |x|_inf = {max_abs:e}")]
    Diverged { iteration: usize, max_abs: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("malformed {format} data at byte {offset}: {message}")]
    Format {
        format: &'static str,
        offset: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }
}
