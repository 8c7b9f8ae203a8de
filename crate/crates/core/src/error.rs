//! Crate-wide error type.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("unsupported derivative order: {0}")]
    UnsupportedOrder(String),

    #[error("Hölder exponent must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),

    #[error("invalid regularity index {0}: must be positive and non-integer")]
    InvalidRegularityIndex(f64),

    #[error("unsupported regularity index {0}: {1}")]
    UnsupportedRegularityIndex(f64, String),

    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown function `{0}`")]
    UnknownFunction(String),

    #[error("unbound identifier `{0}`")]
    UnboundIdentifier(String),

    #[error("domain error in {operation}: {detail} (bindings: {snapshot})")]
    Domain {
        operation: String,
        detail: String,
        snapshot: String,
    },

    #[error("evaluator failure: {0}")]
    EvaluatorFailure(String),

    #[error("missing derivative callback: {0}")]
    MissingDerivativeCallback(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("CFL violation: ratio {ratio:.6} > 1 (dtau = {dtau}, limit = {limit})")]
    CflViolation { ratio: f64, dtau: f64, limit: f64 },

    #[error("non-finite value detected at slice (i = {i}, j = {j})")]
    NonFiniteDetected { i: usize, j: usize },

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("multi-component source problems are not supported (m = {0})")]
    UnsupportedMultiComponent(usize),

    #[error("jet left the admissible ball at (i = {i}, j = {j}): distance {distance} > {radius}")]
    BallExit {
        i: usize,
        j: usize,
        distance: f64,
        radius: f64,
    },

    #[error("fixed-point iteration did not converge: {0}")]
    MaxIterExceeded(String),

    #[error("self-check failed: {0}")]
    SelfCheckFailed(String),

    #[error("invalid grid sequence: {0}")]
    InvalidGridSequence(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported scheme: {0}")]
    UnsupportedScheme(String),

    #[error("unsupported nonlinearity: {0}")]
    UnsupportedNonlinearity(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::IndexOutOfRange(_) => "IndexOutOfRange",
            Error::UnsupportedOrder(_) => "UnsupportedOrder",
            Error::InvalidAlpha(_) => "InvalidAlpha",
            Error::InvalidRegularityIndex(_) => "InvalidRegularityIndex",
            Error::UnsupportedRegularityIndex(..) => "UnsupportedRegularityIndex",
            Error::Syntax { .. } => "SyntaxError",
            Error::UnknownFunction(_) => "UnknownFunction",
            Error::UnboundIdentifier(_) => "UnboundIdentifier",
            Error::Domain { .. } => "DomainError",
            Error::EvaluatorFailure(_) => "EvaluatorFailure",
            Error::MissingDerivativeCallback(_) => "MissingDerivativeCallback",
            Error::UnknownPreset(_) => "UnknownPreset",
            Error::CflViolation { .. } => "CflViolation",
            Error::NonFiniteDetected { .. } => "NonFiniteDetected",
            Error::DivisionByZero(_) => "DivisionByZero",
            Error::UnsupportedMultiComponent(_) => "UnsupportedMultiComponent",
            Error::BallExit { .. } => "BallExit",
            Error::MaxIterExceeded(_) => "MaxIterExceeded",
            Error::SelfCheckFailed(_) => "SelfCheckFailed",
            Error::InvalidGridSequence(_) => "InvalidGridSequence",
            Error::GridMismatch(_) => "GridMismatch",
            Error::UnsupportedScheme(_) => "UnsupportedScheme",
            Error::UnsupportedNonlinearity(_) => "UnsupportedNonlinearity",
            Error::Format(_) => "FormatError",
            Error::Config(_) => "ConfigError",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
