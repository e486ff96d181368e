use thiserror::Error;

/// Errors raised by the geometric and recovery routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("point {point:?} lies outside the chart bounds")]
    OutOfChart { point: Vec<f64> },
    #[error("metric is numerically singular at {point:?}")]
    Degenerate { point: Vec<f64> },
    #[error("operation requires a {expected} metric")]
    UnsupportedSignature { expected: &'static str },
    #[error("boundary defining function has vanishing gradient at {point:?}")]
    DegenerateBoundary { point: Vec<f64> },
    #[error("induced boundary metric has the wrong signature at {point:?}")]
    BoundarySignature { point: Vec<f64> },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("step size underflow at t = {t}")]
    Stiffness { t: f64 },
    #[error("more than {max} boundary events along one geodesic")]
    EventOverflow { max: usize },
    #[error("geodesic runs inside the boundary near t = {t}")]
    BoundaryRun { t: f64 },
    #[error("shooting did not converge after {iterations} iterations (residual {residual:e})")]
    ShootingFailure { iterations: usize, residual: f64 },
    #[error("endpoint map is singular (conjugate degeneracy)")]
    SingularJacobian,
    #[error("no transversal direction found in {draws} draws")]
    SamplingFailure { draws: usize },
    #[error("geodesic did not terminate within t_max = {t_max}")]
    NonTerminating { t_max: f64 },
    #[error("inbound state exits the domain immediately")]
    ZeroMeasure,
    #[error("endpoint is tangential; travel time derivative undefined")]
    UndefinedDerivative,
    #[error("recovery failed: {0}")]
    Recovery(String),
    #[error("table too sparse for query (nearest key at distance {nearest:e}, need {required:e})")]
    TableTooSparse { nearest: f64, required: f64 },
    #[error("incomplete table: {0}")]
    IncompleteTable(String),
    #[error("iteration did not terminate within {steps} steps")]
    NonTermination { steps: usize },
    #[error("consistency check failed: {0}")]
    Consistency(String),
    #[error("convexity violated: {0}")]
    ConvexityViolation(String),
    #[error("fit is ill-conditioned (condition number {condition:e})")]
    IllConditionedFit { condition: f64 },
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("sequence did not converge: {0}")]
    Convergence(String),
    #[error("stall: {0}")]
    Stall(String),
    #[error("grid resolution insufficient: {0}")]
    Resolution(String),
    #[error("inconsistent data: {0}")]
    Inconsistency(String),
    #[error("degenerate stencil for differential at sample {index}")]
    Differential { index: usize },
    #[error("unknown catalog entry `{0}`")]
    UnknownCatalog(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
