//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the solver stack.
///
/// Preconditions that callers are expected to uphold (dimension agreement,
/// iterates inside the box, negative model value before a line search) are
/// reported as dedicated variants rather than panics so that batch drivers can
/// record a failed run and keep going.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid bounds: lb[{index}] = {lb} is not strictly below ub[{index}] = {ub}")]
    InvalidBounds { index: usize, lb: f64, ub: f64 },

    #[error("point leaves the box at coordinate {index}: value {value}, bounds [{lb}, {ub}]")]
    OutOfDomain {
        index: usize,
        value: f64,
        lb: f64,
        ub: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("objective {objective} provides no Hessian oracle")]
    MissingHessian { objective: usize },

    #[error("base point sits on the box boundary; nudge it inside first")]
    BoundaryStart,

    #[error("well-conditioned matrix not found after {attempts} resamples")]
    ResampleLimit { attempts: usize },

    #[error("vertex enumeration supports n <= {max}, got n = {n}")]
    DimensionTooLarge { n: usize, max: usize },

    #[error("zero step passed to a curvature update")]
    ZeroStep,

    #[error("line search requires a negative model value, got theta = {theta}")]
    NonnegativeTheta { theta: f64 },

    #[error("line search failed after {backtracks} backtracks")]
    LineSearchFailed { backtracks: usize },

    #[error("subproblem solve failed: {0}")]
    Subproblem(String),

    #[error("subproblem solver stalled: {0}")]
    SolverStall(String),

    #[error("quadratic row {objective} is not positive definite after flooring")]
    NonConvexRow { objective: usize },

    #[error("unknown problem: {0}")]
    UnknownProblem(String),

    #[error("io failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
