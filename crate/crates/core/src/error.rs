use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("point outside the domain of the space: {0}")]
    DomainViolation(String),
    #[error("heat kernel on this space is only available from the pole")]
    PoleOnly,
    #[error("quadrature did not converge: value {value:e}, error {error:e} after {evaluations} evaluations")]
    NonConvergent {
        value: f64,
        error: f64,
        evaluations: usize,
    },
    #[error("limit fit ill-conditioned: exponent {exponent} outside (0, 4)")]
    IllConditioned { exponent: f64 },
    #[error("barycenter search stalled: {0}")]
    OptimizerStalled(String),
    #[error("density family has no derivative rule: {0}")]
    DerivativeUnavailable(String),
    #[error("measure symmetry not supported here: {0}")]
    UnsupportedSymmetry(String),
    #[error("quantile table undefined: cumulative distribution has a flat interior gap near {at}")]
    CdfNotStrict { at: f64 },
    #[error("degenerate measure: variance {0:e} below tolerance")]
    DegenerateMeasure(f64),
    #[error("time grid too coarse: finite-difference error {fd_error:e} exceeds 10% of scale {scale:e} at t = {t}")]
    GridTooCoarse { t: f64, fd_error: f64, scale: f64 },
    #[error("rigidity window is empty: {0}")]
    WindowEmpty(String),
    #[error("asymptotic volume ratio is zero on a compact space")]
    AvrZero,
    #[error("curvature parameter must be positive, got {0}")]
    KNotPositive(f64),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
