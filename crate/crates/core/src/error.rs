use alloc::string::String;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid state: {0}")]
    State(&'static str),
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    #[error("value out of domain: {0}")]
    Domain(String),
    #[error("conditioning error: {0}")]
    Conditioning(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("association undefined: {0}")]
    UndefinedAssociation(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}

/// Fails with [`Error::NumericFailure`] if any value is NaN or infinite.
pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::NumericFailure(alloc::format!(
            "non-finite value {} at index {i} of {what}",
            values[i]
        ))),
    }
}
