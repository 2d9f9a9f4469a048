use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error("data error: {0}")]
    Data(String),

    /// A non-finite value appeared during optimization. Carries the time step
    /// and iteration so the failing run can be reproduced.
    #[error("non-finite {quantity} at step {step}, iteration {iteration}")]
    NonFinite {
        quantity: &'static str,
        step: usize,
        iteration: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Failures while decoding an IDX container.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad IDX magic number {found:#010x} (expected {expected:#010x})")]
    BadMagic { found: u32, expected: u32 },

    #[error("truncated IDX payload: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },

    #[error("IDX dimensions overflow addressable size")]
    DimensionOverflow,
}

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
