use thiserror::Error;

/// Errors raised by geometry, bracket, dynamics and system routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the chart domain")]
    OutOfChart { point: Vec<f64> },
    #[error("frame is degenerate: condition number {condition:.3e} exceeds {bound:.3e}")]
    DegenerateFrame { condition: f64, bound: f64 },
    #[error("metric is not positive definite at {point:?}")]
    MetricNotPositive { point: Vec<f64> },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("generator is not declared tangent to the group orbits")]
    NotOrbitTangent,
    #[error("generator {index} is inconsistent: skew residual {residual:.3e}")]
    InconsistentGenerators { index: usize, residual: f64 },
    #[error("3-form coefficients not alternating: residual {residual:.3e}")]
    NotAlternating { residual: f64 },
    #[error("denominator {value:.3e} too close to zero")]
    DegenerateDenominator { value: f64 },
    #[error("shape singularity at theta = {theta}: {detail}")]
    ShapeSingularity { theta: f64, detail: String },
    #[error("invalid shape profile: {0}")]
    InvalidProfile(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("Floquet check failed: evenness {evenness:.3e}, periodicity {periodicity:.3e}")]
    FloquetViolation { evenness: f64, periodicity: f64 },
    #[error("adapted basis degenerate: k vanishes near theta in {thetas:?}")]
    AdaptedBasisDegenerate { thetas: Vec<f64> },
    #[error("pole regularization failed: |Rp - Rm| = {gap:.3e} at the pole")]
    PoleRegularizationFailure { gap: f64 },
    #[error("trajectory left the chart at t = {t}")]
    ChartExit { t: f64, last_q: Vec<f64>, last_pi: Vec<f64> },
    #[error("adaptive step {step:.3e} fell below the minimum at t = {t}")]
    StepUnderflow { t: f64, step: f64 },
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn to_vec<T: crate::Real>(v: &nalgebra::DVector<T>) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}
