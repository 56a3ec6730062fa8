use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("partial derivative d_{index} f = {value} is not positive at the base point")]
    NonPositivePartial { index: usize, value: f64 },

    #[error("point {point:?} lies outside the admissible box")]
    DomainViolation { point: Vec<f64> },

    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),

    #[error("invalid grid range [{r}, {s_max}]: {reason}")]
    BadRange { r: f64, s_max: f64, reason: &'static str },

    #[error("need at least {needed} grid points, have {have}")]
    TooFewPoints { needed: usize, have: usize },

    #[error("profile is missing derivative of order {0}")]
    MissingDerivatives(usize),

    #[error("grid spans {decades:.3} decades, tail fitting needs at least one")]
    InsufficientSpan { decades: f64 },

    #[error("quadrature did not reach tolerance {tolerance:e} (estimate {estimate:e})")]
    ToleranceNotMet { tolerance: f64, estimate: f64 },

    #[error("right-hand side does not vanish at infinity (tail a1={a1}, a3={a3})")]
    DivergentTail { a1: f64, a3: f64 },

    #[error("linear estimate {which} violated: ratio {ratio} > bound {bound}")]
    EstimateViolated { which: &'static str, ratio: f64, bound: f64 },

    #[error("z = sigma*s + theta*v is not positive at s = {s}")]
    NonPositiveZ { s: f64 },

    #[error("omega left the admissible box at s = {s}, theta = {theta}: {omega:?}")]
    DomainEscape { s: f64, theta: f64, omega: Vec<f64> },

    #[error("inputs are identical in the weighted norm")]
    IdenticalInputs,

    #[error("no admissible R found below {limit}")]
    RUnbounded { limit: f64 },

    #[error("fixed-point iteration did not converge in {iterations} iterations (last step {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64, trace: crate::fixpoint::IterationTrace },

    #[error("time {0} is outside [-1, 0)")]
    BadTime(f64),

    #[error("could not bracket the curvature root at s = {s} (r = {r}, r' = {rp})")]
    RootBracketFailure { s: f64, r: f64, rp: f64 },

    #[error("step size underflow at s = {s}")]
    StepUnderflow { s: f64 },

    #[error("window point s = {s} maps beyond the grid end {s_max}")]
    WindowOutsideDomain { s: f64, s_max: f64 },

    #[error("the curvature function is not the mean curvature")]
    NotMcf,

    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig { field: field.into(), reason: reason.into() }
    }
}
