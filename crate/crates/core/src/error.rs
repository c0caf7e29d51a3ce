use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("diagonal entry {index} is {value}, below the PSD tolerance")]
    NegativeDiagonal { index: usize, value: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue})")]
    NotPd { min_eigenvalue: f64 },

    #[error("invalid p = {0}; p must lie in [2, inf]")]
    InvalidP(f64),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("box bounds are inverted at coordinate {index}: lo = {lo}, hi = {hi}")]
    BadBox { index: usize, lo: f64, hi: f64 },

    #[error("operation not supported for domain variant `{0}`")]
    UnsupportedVariant(&'static str),

    #[error("quadratic oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error("ellipsoid method hit its iteration limit ({iterations}) without a feasible point")]
    IterationLimit { iterations: usize },

    #[error("weights are not a probability distribution: {0}")]
    NotADistribution(String),

    #[error("diagonal scaling is not normalized: tr_q(D^2) = {value}, expected 1")]
    ScalingNotNormalized { value: f64 },

    #[error("second-moment certificates require a symmetric point set")]
    NotSymmetric,

    #[error("invalid parameters: {0}")]
    BadParams(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("delta must lie in (0, 1), got {0}")]
    BadDelta(f64),

    #[error("data point {index} lies outside the domain")]
    PointOutsideDomain { index: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    /// Stable snake_case name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NegativeDiagonal { .. } => "negative_diagonal",
            Error::NotPsd { .. } => "not_psd",
            Error::NotPd { .. } => "not_pd",
            Error::InvalidP(_) => "invalid_p",
            Error::InvalidDomain(_) => "invalid_domain",
            Error::BadBox { .. } => "bad_box",
            Error::UnsupportedVariant(_) => "unsupported_variant",
            Error::OracleUnavailable(_) => "oracle_unavailable",
            Error::IterationLimit { .. } => "iteration_limit",
            Error::NotADistribution(_) => "not_a_distribution",
            Error::ScalingNotNormalized { .. } => "scaling_not_normalized",
            Error::NotSymmetric => "not_symmetric",
            Error::BadParams(_) => "bad_params",
            Error::TooLarge(_) => "too_large",
            Error::BadDelta(_) => "bad_delta",
            Error::PointOutsideDomain { .. } => "point_outside_domain",
            Error::Empty(_) => "empty",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
