use thiserror::Error;

use crate::generators::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside the operation's precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A generator failed its shape conditions.
    #[error("generator failed validation: {0}")]
    Validation(ValidationReport),

    /// A point fell outside the range a generator or table can represent.
    #[error("domain error: {0}")]
    Domain(String),

    /// The maximizer of a conjugate problem hit the edge of the evaluation grid.
    #[error("domain too short: maximizer saturates at t = {domain_max}; enlarge domain_max")]
    DomainTooShort { domain_max: f64 },

    #[error("calibration unsatisfiable: generator too light for this distribution (no constant up to {cap} works)")]
    CalibrationUnsatisfiable { cap: f64 },

    /// A configured resource cap (enumeration size, joint states) would be exceeded.
    #[error("resource cap exceeded: {0}")]
    CapExceeded(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
