use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid group: {0}")]
    InvalidGroup(String),

    #[error("invalid walk: {0}")]
    InvalidWalk(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("color chain is not irreducible")]
    NotIrreducible,

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("no convergence after {iterations} iterations (last update {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("traffic solutions disagree: distance {0:e}")]
    PathDisagreement(f64),

    #[error("case mismatch: expected {expected}, found {found}")]
    CaseMismatch { expected: String, found: String },

    #[error("word ball too large ({states} states); use the random-action estimator instead")]
    BallOverflow { states: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for errors caused by malformed input rather than numerical trouble.
    pub fn is_schema(&self) -> bool {
        matches!(
            self,
            Error::InvalidGroup(_) | Error::InvalidWalk(_) | Error::Parse(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
