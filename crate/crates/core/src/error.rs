use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("query outside the domain: {0}")]
    OutOfDomain(String),

    #[error("invalid perturbation radius: {0}")]
    InvalidRadius(String),

    #[error("initial condition is not in C ∪ D or violates the state constraint: {0}")]
    InvalidInitialCondition(String),

    #[error("evaluation failure at sample {index}: {message} (point {point:?})")]
    EvaluationFailure {
        index: usize,
        point: Vec<f64>,
        message: String,
    },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("range property violated (implementation bug): {0}")]
    LemmaViolation(String),

    #[error("envelope fit failed: {0}")]
    FitFailure(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
