use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unsupported model form: {0}")]
    UnsupportedForm(String),

    #[error("series chaining error between system {upstream} and system {downstream}: {detail}")]
    Chaining {
        upstream: usize,
        downstream: usize,
        detail: String,
    },

    #[error("algebraic loop: {0}")]
    AlgebraicLoop(String),

    #[error("simulation diverged at step {step}")]
    Diverged { step: usize },

    #[error("condition not established: solver budget exhausted after {iterations} iterations (best margin {best_margin:.3e})")]
    NotCertified { iterations: usize, best_margin: f64 },

    #[error("no gain synthesized: {0}")]
    NotSynthesized(String),

    #[error("structural obstruction: {0}")]
    StructuralObstruction(String),

    #[error("gain recovery failed: {0}")]
    Recovery(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}
