use thiserror::Error;

/// Errors raised across the analysis, design and simulation layers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not Metzler: entry ({row}, {col}) = {value}")]
    NotMetzler { row: usize, col: usize, value: f64 },

    #[error("matrix is not nonnegative: entry ({row}, {col}) = {value}")]
    Negative { row: usize, col: usize, value: f64 },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("power iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("matrix is singular to working precision")]
    Singular,

    #[error("matrix is ill-conditioned (condition estimate {estimate:.3e})")]
    IllConditioned { estimate: f64 },

    #[error("system is not mean stable (spectral abscissa {abscissa:.6e})")]
    NotStable { abscissa: f64 },

    #[error("certificate infeasible: {0}")]
    Infeasible(String),

    #[error("positivity violated: {0}")]
    PositivityViolation(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid program: {0}")]
    MalformedProgram(String),

    #[error("variable {0} has no value")]
    MissingVariable(String),

    #[error("variable {name} has non-positive value {value}")]
    NonPositiveValue { name: String, value: f64 },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("solver finished with status {0}")]
    SolverStatus(String),

    #[error("verification failed: {0}")]
    VerificationFailed(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
