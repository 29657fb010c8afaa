use thiserror::Error;

/// Errors produced by the model, metric and optimization routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum IsacError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("matrix is indefinite beyond tolerance (min eigenvalue {min_eigenvalue:.3e})")]
    Indefinite { min_eigenvalue: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    FixedPointDiverged { iterations: usize, residual: f64 },

    #[error("gradient curvature term beta vanished (beta = {beta:.3e})")]
    SingularCurvature { beta: f64 },

    #[error("rate target {rate_min:.6} exceeds the water-filling maximum {rate_max:.6}")]
    Infeasible { rate_min: f64, rate_max: f64 },

    #[error("initial point is not strictly feasible: {0}")]
    NotStrictlyFeasible(String),

    #[error("barrier solver failed at stage {stage} (mu = {mu:.3e}): {reason}")]
    SolverFailed {
        stage: usize,
        mu: f64,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, IsacError>;
