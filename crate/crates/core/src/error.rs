use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid exponents: {0}")]
    InvalidExponents(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("the p < q branch of the mixed norm is not additive in time (p = {p}, q = {q})")]
    WrongBranch { p: f64, q: f64 },

    #[error("theta = {theta} < 0 lies outside the estimate's hypothesis")]
    Supercritical { theta: f64 },

    #[error("non-finite coefficient on path {path} at step {step} (t = {t}, x = {x:?})")]
    NonFinite {
        path: usize,
        step: usize,
        t: f64,
        x: Vec<f64>,
    },

    #[error("time {0} is not a node of the ensemble grid")]
    OffGrid(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("negative integrand value {value} at (t = {t}, x = {x:?})")]
    NegativeIntegrand { value: f64, t: f64, x: Vec<f64> },

    #[error("drift hypothesis violated on {fraction} of samples (limit 0.001)")]
    HypothesisViolated { fraction: f64 },

    #[error("quadrature failure: {0}")]
    Quadrature(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
