use thiserror::Error;

/// Errors raised by the discretization, the pointwise algebra and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("axis {axis} out of range for complex dimension {n}")]
    AxisOutOfRange { axis: usize, n: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("empty field")]
    EmptyField,

    #[error("matrix not positive definite at point {point} (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { point: usize, min_eigenvalue: f64 },

    #[error("inadmissible potential: margin {margin:e} at point {point}")]
    Inadmissible { point: usize, margin: f64 },

    #[error("{what} must be positive, found {value:e} at point {point}")]
    NonPositive {
        what: &'static str,
        point: usize,
        value: f64,
    },

    #[error("order {k} out of range for dimension {n}")]
    OrderOutOfRange { k: usize, n: usize },

    #[error("invalid index set: {0}")]
    InvalidIndexSet(String),

    #[error("unsupported complex dimension {0} (expected 2 or 3)")]
    UnsupportedDimension(usize),

    #[error("vanishing denominator in {0}")]
    VanishingDenominator(&'static str),

    #[error("curvature formulas disagree: max discrepancy {discrepancy:e} exceeds {tolerance:e}")]
    CurvatureMismatch { discrepancy: f64, tolerance: f64 },

    #[error("Newton did not converge in {iterations} iterations (residual {residual:e})")]
    NewtonMaxIterations { iterations: usize, residual: f64 },

    #[error("line search stalled at iteration {iteration} (residual {residual:e}, margin {margin:e})")]
    LineSearchStall {
        iteration: usize,
        residual: f64,
        margin: f64,
    },

    #[error("linear solver reached relative residual {relative_residual:e} after {iterations} iterations")]
    LinearSolver {
        iterations: usize,
        relative_residual: f64,
    },

    #[error("step size fell below dt_min; last accepted t = {last_t}")]
    StepUnderflow { last_t: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("delta too large for the cone condition; max feasible delta {max_feasible:e}")]
    DeltaTooLarge { max_feasible: f64 },

    #[error("radius {radius} below grid spacing {spacing}")]
    RadiusBelowSpacing { radius: f64, spacing: f64 },

    #[error("singular operator: {0}")]
    Singular(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
