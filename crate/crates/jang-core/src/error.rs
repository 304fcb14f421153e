//! Error type shared by all solver stages.

use thiserror::Error;

/// Errors surfaced by grid construction, data validation and the solvers.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("right-hand side has nonzero mean {mean:.3e}; the sphere Laplacian is only invertible on mean-zero functions")]
    UnsolvableRhs { mean: f64 },

    #[error("sign error: tail samples must be single-signed and nonzero (fit the absolute deviation instead)")]
    SignError,

    #[error("barrier failure: |k| reached 1 at r = {r:.6e} > r0 = {r0:.6e}; r0 is too small for these constants")]
    BarrierFailure { r: f64, r0: f64 },

    #[error("barrier assembly: ordering f_- <= f_+ violated by {violation:.3e} at r = {r:.6e}")]
    OrderingViolation { r: f64, violation: f64 },

    #[error("ODE integration failed: {0}")]
    OdeFailure(String),

    #[error("Newton solver did not converge after {iterations} iterations; last residual norm {residual:.3e}")]
    NewtonNonConvergence { iterations: usize, residual: f64 },

    #[error("trapping violation: solution leaves the barrier slab by {violation:.3e} at r = {r:.6e}")]
    TrappingViolation { r: f64, violation: f64 },

    #[error("conformal factor is non-positive at r = {r:.6e} (u = {u:.3e}); inputs violate the maximum principle")]
    NonPositiveConformalFactor { r: f64, u: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("mass routes disagree beyond tolerance: formula {formula:.6e} vs quadrature {quadrature:.6e}")]
    MassRouteMismatch { formula: f64, quadrature: f64 },
}

pub type Result<T> = std::result::Result<T, CoreError>;
