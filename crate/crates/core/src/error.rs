use thiserror::Error;

/// Errors raised by the library. Every variant has a stable machine-readable
/// code available through [`Error::code`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parameter order: {0}")]
    ParameterOrder(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("domain violation: {0}")]
    Domain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("negative potential V({state}) = {value}")]
    NegativePotential { state: usize, value: f64 },
    #[error("state {state} outside truncation {{0..{n}}}")]
    StateOutOfRange { state: usize, n: usize },
    #[error("size guard exceeded: {size} > {limit}")]
    SizeGuard { size: usize, limit: usize },
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    #[must_use]
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::ParameterOrder(_) => "parameter-order",
            Error::InvalidModel(_) => "invalid-model",
            Error::Domain(_) => "domain-violation",
            Error::Precondition(_) => "precondition-violation",
            Error::NegativePotential { .. } => "negative-potential",
            Error::StateOutOfRange { .. } => "state-out-of-range",
            Error::SizeGuard { .. } => "size-guard",
            Error::Shape { .. } => "shape-mismatch",
            Error::Numerical(_) => "numerical-failure",
            Error::Config(_) => "config-error",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )))
    }
}
