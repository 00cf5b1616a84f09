use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge: estimate {estimate:e}, error bound {error_bound:e}")]
    QuadratureNonConvergence { estimate: f64, error_bound: f64 },

    #[error("no sign change in [{lower}, {upper}]: g(lower) = {g_lower:e}, g(upper) = {g_upper:e}")]
    Bracket {
        lower: f64,
        upper: f64,
        g_lower: f64,
        g_upper: f64,
    },

    #[error("root finder did not converge after {iterations} iterations (bracket width {width:e})")]
    RootNonConvergence { iterations: usize, width: f64 },

    #[error("length mismatch: expected {expected}, got {actual} ({what})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Numerical failures (as opposed to bad input) map to a distinct CLI exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureNonConvergence { .. }
                | Error::Bracket { .. }
                | Error::RootNonConvergence { .. }
        )
    }
}
