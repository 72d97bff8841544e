use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by estimators, sieves and generators in this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("cannot place knots for input column {column}: zero variance")]
    KnotPlacement { column: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("singular system in {context}: smallest eigenvalue {min_eigenvalue:e}")]
    Singular {
        context: &'static str,
        min_eigenvalue: f64,
    },
    #[error("optimizer diverged after {step} steps: {reason}")]
    Divergence {
        step: usize,
        reason: String,
        trace: Vec<f64>,
    },
    #[error("sample of size {n} too small: {reason}")]
    TooSmall { n: usize, reason: String },
    #[error("{failed} of {total} bootstrap draws failed (limit 10%)")]
    BootstrapFailures { failed: usize, total: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Shape {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

pub(crate) fn check_finite(context: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(String::from(context)))
    }
}
