use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("direction violation: {0}")]
    Direction(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unknown leg `{0}`")]
    UnknownLeg(String),
    #[error("duplicate leg id `{0}`")]
    DuplicateLeg(String),
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("tensor is not unitary (residual {0:.3e})")]
    NotUnitary(f64),
    #[error("memory budget exceeded: {needed} entries needed, cap is {cap}")]
    Budget { needed: usize, cap: usize },
    #[error("structural error: {0}")]
    Structure(String),
    #[error("directed cycle: {0}")]
    Cycle(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
