//! Crate-wide error type.

use thiserror::Error;

/// Everything that can go wrong across the library.
#[derive(Debug, Error)]
pub enum Error {
    // ---- system definition / validation ----
    #[error("parameter set is empty")]
    EmptyParameterSet,
    #[error("density is non-positive at node {node} for parameter `{label}`: {value}")]
    NonPositiveDensity {
        node: usize,
        label: String,
        value: f64,
    },
    #[error("map `{label}` leaves the domain at node {node} by {escape:e}")]
    MapEscapesDomain {
        node: usize,
        label: String,
        escape: f64,
    },
    #[error("point {point:?} lies outside the domain box")]
    OutOfDomain { point: [f64; 2] },
    #[error("unknown parameter label `{0}`")]
    UnknownParameter(String),
    #[error("invalid system: {0}")]
    Invalid(String),

    // ---- grids and operators ----
    #[error("grid mismatch: {0}")]
    GridMismatch(&'static str),
    #[error("operator iterate would overflow: q-mass vanishes on some row")]
    Overflow,
    #[error("degenerate operator: B(1) has a zero entry at node {node}")]
    DegenerateOperator { node: usize },

    // ---- iterative solvers ----
    #[error("{stage}: no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        stage: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("eigenfunction is not strictly positive (min value {min:e})")]
    NonPositiveEigenfunction { min: f64 },
    #[error("optimizer diverged: {0}")]
    OptimizerDiverged(String),

    // ---- holonomic measures / entropy ----
    #[error("system is not normalized: q-mass deviates from 1 by {deviation:e} at node {node}")]
    NotNormalized { node: usize, deviation: f64 },
    #[error("orbit is empty")]
    EmptyOrbit,
    #[error("conditional puts mass {mass:e} on parameter `{label}` where the a-priori weight is zero")]
    AbsoluteContinuityViolated { label: String, mass: f64 },
    #[error("function must be strictly positive (min value {min:e})")]
    NonPositiveFunction { min: f64 },

    // ---- chaos game ----
    #[error("partition level {level} yields {cells} cells, above the 2^24 limit")]
    LevelTooFine { level: u32, cells: u64 },
    #[error("maps are not a dyadic family: {0}")]
    NotDyadicFamily(String),

    // ---- expressions ----
    #[error("syntax error at position {position}: {message}")]
    SyntaxError { position: usize, message: String },
    #[error("unknown identifier `{name}` at position {position}")]
    UnknownIdentifier { name: String, position: usize },
    #[error("expression undefined: {0}")]
    EvalDomain(String),

    // ---- config / ingestion ----
    #[error("config error at {path}: {message}")]
    SchemaError { path: String, message: String },
    #[error("non-numeric cell in row {row}: `{cell}`")]
    NonNumericCell { row: usize, cell: String },
    #[error("time series too short: need at least 2 values, got {0}")]
    TooShort(usize),
    #[error("zero previous value at row {row}: relative return undefined")]
    ZeroPreviousValue { row: usize },

    // ---- i/o ----
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
