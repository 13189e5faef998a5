use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid has no interior points")]
    EmptyInterior,
    #[error("Cholesky factorization failed at pivot {pivot} (value {value:e}); operator is not positive definite")]
    FactorizationFailure { pivot: usize, value: f64 },
    #[error("stencil is not symmetric: imaginary part of symbol is {imag:e}")]
    NonSymmetricStencil { imag: f64 },
    #[error("point {0:?} lies outside the closed domain")]
    OutOfDomain(Vec<f64>),
    #[error("bridge denominator r(k) = {value:e} is degenerate")]
    DegenerateDenominator { value: f64 },
    #[error("conditioning block is singular (det = {det:e})")]
    SingularConditioning { det: f64 },
    #[error("eigensolver did not converge: {converged} of {requested} pairs after {iterations} Lanczos steps")]
    NoConvergence {
        requested: usize,
        converged: usize,
        iterations: usize,
    },
    #[error("only {found} eigenvalues in the trusted window, need at least {required}")]
    InsufficientTrustedWindow { found: usize, required: usize },
    #[error("mesh ladder has {len} entries, need at least {required}")]
    InsufficientLadder { len: usize, required: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
