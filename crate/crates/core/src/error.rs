use thiserror::Error;

/// Errors raised by kernels, discretizations, solvers and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (coincident points,
    /// non-positive times, cylinders leaving the space-time box, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A kernel, penalty or problem description violates its invariants.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// The grid cannot host the requested operator.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// Field or slice shapes do not match the grid.
    #[error("shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },

    /// A quadrature did not reach its tolerance.
    #[error("quadrature did not converge: estimated error {estimate:e} exceeds {tolerance:e}")]
    Accuracy { estimate: f64, tolerance: f64 },

    /// Newton failed inside an implicit step.
    #[error("newton failed at time index {time_index} after {iterations} iterations (residual {residual:e})")]
    Step {
        time_index: usize,
        iterations: usize,
        residual: f64,
    },

    /// The complementarity reference solver exhausted its sweep budget.
    #[error("lcp oracle exhausted {sweeps} sweeps at time index {time_index} (residual {residual:e})")]
    Oracle {
        time_index: usize,
        sweeps: usize,
        residual: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
