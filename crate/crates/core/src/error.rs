use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point is not in the open polytope: facet {facet} has value {value:e}")]
    OutsideDomain { facet: usize, value: f64 },

    #[error("invalid polytope: {0}")]
    InvalidPolytope(String),

    #[error("polytope is unbounded")]
    Unbounded,

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("generating-function Jacobian is singular (sigma_min/scale = {ratio:e})")]
    SingularJacobian { ratio: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown condition `{0}`")]
    UnknownCondition(String),

    #[error("potential evaluation failed: {0}")]
    Potential(String),

    #[error("weight {0:?} is not an interior node of the table grid")]
    TableBoundary(Vec<f64>),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
