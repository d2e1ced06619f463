use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("multi-index must be nonzero")]
    ZeroMultiIndex,

    #[error("multi-index {index} is not in the class M_{m}")]
    OutsideClass { index: String, m: u32 },

    #[error("missing derivative entry for multi-index {0}")]
    MissingDerivative(String),

    #[error("derivative of order {requested} requested but only {available} available")]
    UnsupportedOrder { requested: u32, available: u32 },

    #[error("no certified sup-norm bound for derivative order {0}")]
    MissingSupBound(u32),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("insufficient decay at grid boundary: {what} = {value:e} exceeds {limit:e}")]
    InsufficientDecay {
        what: &'static str,
        value: f64,
        limit: f64,
    },

    #[error("support violation: {0}")]
    SupportViolation(String),

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::InsufficientDecay { .. }
                | Error::SupportViolation(_)
                | Error::Divergent(_)
                | Error::Degenerate(_)
                | Error::NotSymmetric(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
