use thiserror::Error;

/// Errors raised by the online learning and control routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller broke an operation's precondition (lengths, dimensions, ranges).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A computation produced NaN or infinite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Strong-stability certification is impossible for this closed loop.
    #[error("cannot certify strong stability: {0}")]
    CannotCertify(String),

    /// The exploration data does not excite every direction of the state.
    #[error("insufficient excitation: {0}")]
    InsufficientExcitation(String),

    /// An internal invariant broke; indicates a bug rather than bad input.
    #[error("invariant failure: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Contract(msg()))
    }
}
