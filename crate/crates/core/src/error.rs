use thiserror::Error;

/// Errors raised by the matrix kernels, solvers and file formats.
#[derive(Debug, Error)]
pub enum NodaError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vector component {index} is not strictly positive ({value})")]
    NonPositiveComponent { index: usize, value: f64 },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid option: {0}")]
    InvalidOption(String),

    /// An unsatisfied inner solve produced a vector that is not strictly positive.
    #[error("positivity at risk at outer step {step}: inner solve unsatisfied (|f| = {f_norm:e}) and y[{index}] = {value:e}")]
    PositivityAtRisk { step: usize, index: usize, value: f64, f_norm: f64 },

    /// A satisfied inner solve still produced a nonpositive iterate.
    #[error("internal contract violated at outer step {step}: {detail}")]
    ContractViolation { step: usize, detail: String },

    #[error("oracle inconsistency: {0}")]
    OracleInconsistency(String),

    #[error("dense oracle size cap exceeded: n = {n} > {cap}")]
    SizeCapExceeded { n: usize, cap: usize },

    #[error("no convergence after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("series too short: need at least {needed} usable entries, found {found}")]
    SeriesTooShort { needed: usize, found: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("zero vector produced at iteration {0}")]
    ZeroVector(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NodaError>;
