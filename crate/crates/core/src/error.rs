use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("point (x={x}, y={y}, t={t}) is outside the domain 0 <= y <= x <= 1, t >= 0")]
    Domain { x: f64, y: f64, t: f64 },

    #[error("derivative of order {requested} requested but the profile only stores up to order {available}")]
    DerivativeOrder { requested: usize, available: usize },

    #[error("tridiagonal system is singular (pivot {pivot:e} at row {row})")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("grid mismatch: expected {expected} nodes, got {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("trigger variable m became non-positive ({m:e}) at t={t}; reduce the time step")]
    StepSizeViolation { t: f64, m: f64 },

    #[error("non-finite state at t={t}")]
    NonFinite { t: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
