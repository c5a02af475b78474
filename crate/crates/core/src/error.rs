use thiserror::Error;

/// Errors raised by the placement and estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("time {0} does not lie on the integration grid")]
    OffGrid(f64),

    #[error("singular Gramian: {0}")]
    Singular(String),

    #[error("line search failed to decrease the cost at iteration {0}")]
    LineSearch(usize),

    #[error("time window contains no grid points")]
    EmptyWindow,

    #[error("infeasible placement constraints: {0}")]
    Infeasible(String),

    #[error("every singular value fell below the truncation threshold")]
    RankCollapse,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
