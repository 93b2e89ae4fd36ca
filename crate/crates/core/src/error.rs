use thiserror::Error;

/// Every failure the library reports. Check failures are not errors; they
/// live in report structs with a `pass` flag.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates its domain; the message names the constraint.
    #[error("invalid parameter: {0}")]
    Domain(String),

    /// The requested construction does not exist for these inputs.
    #[error("construction infeasible: {0}")]
    Infeasible(String),

    #[error("regime mismatch: {0}")]
    Regime(String),

    /// Quadrature, root finding or a guarded formula did not produce a usable number.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
