use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("gate is nearly singular (|det U| = {det_abs:.3e})")]
    NearSingularGate { det_abs: f64 },

    #[error(
        "shape function vanishes at sample {index} where the field differs from the reference"
    )]
    DivisionByZeroShape { index: usize },

    #[error("gates are not in the same local equivalence class (distance {distance:.3e} > {tolerance:.1e})")]
    ClassMismatch { distance: f64, tolerance: f64 },

    #[error("Chebychev series did not converge: {0}")]
    SpectralBoundViolation(String),

    #[error(
        "functional increased from {previous:.12e} to {current:.12e} at iteration {iteration}; \
         increase the second-order parameter A (currently {a})"
    )]
    MonotonicityViolation {
        iteration: usize,
        previous: f64,
        current: f64,
        a: f64,
    },

    #[error("gate is not diagonal (off-diagonal weight {0:.3e})")]
    NotDiagonal(f64),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
