use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("instance must contain at least one value")]
    EmptyInstance,

    #[error("value {value} at position {index} is outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f64 },

    #[error("arrival sample does not match the instance: {0}")]
    ArrivalMismatch(String),

    #[error("threshold curve violates the best-only assumptions: {0}")]
    CurveAssumptionViolated(String),

    #[error("invalid threshold curve: {0}")]
    InvalidCurve(String),

    #[error("{x} is outside the inverse domain [{lo}, {hi}]")]
    DomainError { x: f64, lo: f64, hi: f64 },

    #[error("value {value} lies below f(1) = {floor}; drop it before exact evaluation")]
    PreprocessRequired { value: f64, floor: f64 },

    #[error("relaxation order q = {q} is invalid for n = {n}")]
    InvalidOrder { q: usize, n: usize },

    #[error("tail threshold time is zero; the logarithmic series diverges")]
    SeriesDomain,

    #[error("box is not contained in [f(1), 1]^5")]
    BoxOutOfDomain,

    #[error("threshold times must be ordered consistently with the values")]
    OrderViolation,

    #[error("the Lipschitz coefficients only hold for exp(-t/0.472); got c = {0}")]
    UnsupportedCurve(f64),

    #[error("state space too large: {0}")]
    StateSpaceTooLarge(String),

    #[error("decision tables were built for a different mixture")]
    TableMismatch,

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed input: {0}")]
    Parse(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
