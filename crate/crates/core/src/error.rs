use alloc::string::String;

/// Failure modes shared by every stage of the pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("region `{0}` contains no grid nodes")]
    EmptyRegion(&'static str),
    #[error("region `{region}` is within {distance} of the domain (minimum {required})")]
    SeparationViolation {
        region: &'static str,
        distance: f64,
        required: f64,
    },
    #[error("region `{0}` is not contained in its parent with the required margin")]
    MarginViolation(&'static str),
    #[error("field support leaks outside the target region")]
    RegionOverflow,
    #[error("field is not supported in the required node set")]
    SupportMismatch,
    #[error("polynomial degree {degree} exceeds the admissible maximum {max}")]
    DegreeTooHigh { degree: usize, max: usize },
    #[error("fractional order {0} is outside (1/2, 1)")]
    OrderOutOfRange(f64),
    #[error("field support is too close to the box edge for periodic embedding")]
    SupportTooWide,
    #[error("the field is identically zero")]
    ZeroField,
    #[error("non-finite value in input data")]
    NonFiniteData,
    #[error("eigenvalue condition violated: smallest singular value {smallest:e} below {threshold:e}")]
    EigenvalueConditionViolated { smallest: f64, threshold: f64 },
    #[error("eigenvalue condition violated at sweep parameter {delta}")]
    SweepPointSingular { delta: f64 },
    #[error("no cutoff meets the tolerance; best relative error {best:e}")]
    TargetUnreachable { best: f64 },
    #[error("no admissible node for pointwise recovery")]
    EmptyAdmissibleSet,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("linear solve failed: {0}")]
    LinearAlgebra(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
