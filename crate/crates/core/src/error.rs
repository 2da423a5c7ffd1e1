//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, DgError>;

/// All failure modes surfaced by the library.
///
/// Numerical routines are total on their documented domains; errors are
/// reserved for contract violations (bad dimensions, out-of-range
/// parameters, malformed files) and for the one runtime condition the
/// training loop refuses to continue past (a non-finite loss).
#[derive(Debug, Error)]
pub enum DgError {
    /// A vector or matrix had the wrong length for the operation.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A would-be unit normal was too short to normalize safely.
    #[error("degenerate normal vector: norm {norm:.3e} is below 1e-12")]
    DegenerateNormal { norm: f64 },

    /// A scalar or structured parameter violated its documented range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A checker or report was asked to run without all required inputs.
    #[error("missing required inputs: {}", missing.join(", "))]
    MissingInputs { missing: Vec<&'static str> },

    /// A data or model file failed to parse; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Underlying I/O failure while reading or writing an artifact.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// The training loop observed a NaN or infinite loss and aborted.
    #[error("training aborted at epoch {epoch}: loss is not finite")]
    NonFiniteLoss { epoch: usize },
}

impl DgError {
    /// Convenience constructor for [`DgError::InvalidParameter`].
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        DgError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
