use num_complex::Complex64;

/// Failure modes shared by every stage of the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("no connection: {0}")]
    NoConnection(String),
    #[error("resolution insufficient: {0}")]
    ResolutionInsufficient(String),
    #[error("normalization degenerate: {0}")]
    NormalizationDegenerate(String),
    #[error("branch degenerate: radicand vanishes at lambda = {0}")]
    BranchDegenerate(Complex64),
    #[error("degenerate basis: {0}")]
    DegenerateBasis(String),
    #[error("overflow uncontrolled: {0}")]
    OverflowUncontrolled(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("quadrature unconverged: {0}")]
    QuadratureUnconverged(String),
    #[error("instability: {0}")]
    Instability(String),
    #[error("shift not invertible: {0}")]
    ShiftNonInvertible(String),
    #[error("division degenerate: {0}")]
    DivisionDegenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
