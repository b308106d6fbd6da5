use thiserror::Error;

/// Errors surfaced by field evaluation, kernel/tensor assembly, numerical
/// differentiation, and the geodesic integrator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("tangent vector must be nonzero")]
    ZeroVector,

    #[error("1-form norm out of range: c = {c} at x = {x:?} (required 0 < c < 1)")]
    NormOutOfRange { c: f64, x: Vec<f64> },

    #[error("background metric is not positive-definite at x = {x:?} (min eigenvalue {min_eig})")]
    NotPositiveDefinite { x: Vec<f64>, min_eig: f64 },

    #[error("background metric has wrong signature at x = {x:?}: expected (+,-,...,-), found {positive} positive eigenvalues")]
    WrongSignature { x: Vec<f64>, positive: usize },

    #[error("background metric is singular at x = {x:?}")]
    SingularMetric { x: Vec<f64> },

    #[error("constraint violated: {0}")]
    ConstraintViolation(String),

    #[error("axis plane b = 0: the generating-function representation is undefined there")]
    AxisPlane,

    #[error("vector outside the admissible cone: {0}")]
    InadmissibleVector(String),

    #[error("duality substitution produced a non-real value (imaginary residue {residue:e}); an odd-degree monomial survived")]
    OddDegreeMonomial { residue: f64 },

    #[error("finite-difference certificate {certificate:e} exceeds tolerance {tolerance:e}")]
    StepUnderflow { certificate: f64, tolerance: f64 },

    #[error("stencil point left the admissible domain: {0}")]
    InadmissibleStencil(String),

    #[error(
        "charge value {g} too close to the range boundary |g| = 2 for a two-sided step {step:e}"
    )]
    RangeClamp { g: f64, step: f64 },

    #[error("trajectory left the admissible domain at t = {t}: {reason}")]
    LeftAdmissibleDomain { t: f64, reason: String },

    #[error("integration step rejected at t = {t}: {reason}")]
    StepRejected { t: f64, reason: String },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
