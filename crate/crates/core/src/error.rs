use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("cube family is empty")]
    EmptyFamily,
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error("no convergence after {iterations} iterations (best value {best}, gap {gap})")]
    Convergence { best: f64, gap: f64, iterations: usize },
    #[error("sparse family sets overlap at cell {cell}")]
    Overlap { cell: usize },
    #[error("mismatch: {0}")]
    Mismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
