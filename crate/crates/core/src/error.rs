use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),
    #[error("divergent integral: {0}")]
    Divergent(String),
    #[error("quadrature did not converge: estimate {value:e}, error {error:e}")]
    NoConvergence { value: f64, error: f64 },
    #[error("no admissible root: {0}")]
    NoAdmissibleRoot(String),
    #[error("certificate unavailable: {0}")]
    Certificate(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
