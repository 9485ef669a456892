use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid metric family: {0}")]
    InvalidFamily(String),

    #[error("closed-form evaluation overflowed at r = {r}")]
    DomainOverflow { r: f64 },

    #[error("grid needs at least {min} nodes, got {got}")]
    GridTooSmall { min: usize, got: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid is not uniform (node {index} deviates)")]
    NonUniformGrid { index: usize },

    #[error("array length {got} does not match grid length {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("r = {r} lies outside the profile grid [{r_min}, {r_max}]")]
    OutOfGrid { r: f64, r_min: f64, r_max: f64 },

    #[error("the origin is excluded from the domain")]
    ZeroPoint,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{what} is only available in complex dimension 2 (got {n})")]
    UnsupportedDimension { what: &'static str, n: usize },

    #[error("bundle index must be a positive integer, got {0}")]
    NotIntegerIndex(f64),

    #[error("phi_r underflows at r = {r}")]
    DegenerateDerivative { r: f64 },

    #[error("finite-difference step {h} is outside the admissible range")]
    InvalidStep { h: f64 },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("least-squares fit failed: {0}")]
    Fit(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("Newton iteration did not converge at t = {t} with dt = {dt} (scaled residual {residual:e}); retry with dt = {recommended_dt}")]
    NewtonFailed {
        t: f64,
        dt: f64,
        residual: f64,
        recommended_dt: f64,
    },

    #[error("Kähler condition violated at r = {r}, t = {t}")]
    KahlerViolation { r: f64, t: f64 },

    #[error("singular linear system at row {0}")]
    SingularMatrix(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
