use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("probability at position {index} is not positive ({value})")]
    NonPositiveMass { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, expected 1")]
    MassNotOne { sum: f64 },
    #[error("invalid input shape: {0}")]
    InvalidShape(String),
    #[error("invalid group specification: {0}")]
    InvalidSpec(String),
    #[error("walk is recurrent; drift and entropy vanish and the closed forms degenerate")]
    RecurrentWalk,
    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },
    #[error("drift formulas disagree: 1 - 2 sum p q = {direct}, B/A = {ratio}")]
    FormulaMismatch { direct: f64, ratio: f64 },
    #[error("argument outside the admissible domain: {0}")]
    DomainViolation(String),
    #[error("argument outside the domain of convergence: {0}")]
    OutOfDomain(String),
    #[error("distribution table needs {entries} entries, cap is {cap}")]
    MemoryBudgetExceeded { entries: usize, cap: usize },
    #[error("length functional `{0}` is not defined for this group")]
    IncompatibleFunctional(&'static str),
    #[error("multi-start optimization disagrees: spread {spread:e} exceeds {tol:e}")]
    MultiStartDisagreement { spread: f64, tol: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
