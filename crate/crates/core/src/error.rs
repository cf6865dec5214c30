use thiserror::Error;

/// Errors raised across the estimation, tuning and theory routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid sample: {0}")]
    Sample(String),

    #[error("quadrature did not converge: estimate {estimate:e}, error bound {error_bound:e}")]
    Quadrature { estimate: f64, error_bound: f64 },

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("tuning failed: {0}")]
    Tuning(String),

    #[error("optimum on the boundary of the search box: {0}")]
    Boundary(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Cauchy-Schwarz equality case: 4 C(B,1) C(B,2L) - C(B,L)^2 vanishes,
    /// so no interior optimal bandwidth exists (assumption D(e) violated).
    #[error(
        "degenerate density: 4*C(B,1)*C(B,2L) - C(B,L)^2 = {denominator:e}; \
         assumption D(e) fails and no optimal bandwidth exists"
    )]
    DegenerateDensity { denominator: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
