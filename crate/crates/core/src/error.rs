use thiserror::Error;

/// Errors raised by the library.
///
/// `Validation` and `Precondition` map to usage-level problems with the
/// inputs, `Resource` to configured size caps being exceeded.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("resource limit: {what} needs dimension {requested}, cap is {cap}")]
    Resource {
        what: String,
        requested: usize,
        cap: usize,
    },

    #[error("degenerate shift for m = {m}: sampled minimum |tr[W_m sigma^m]| is {value:e} (the parameter s is likely not below the robustness)")]
    DegenerateShift { m: usize, value: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
