//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by graph construction, evaluation, and the higher-level
/// training / analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An operation was applied to arrays whose shapes do not fit together.
    #[error("shape mismatch in `{op}`: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// A named graph input was referenced but never declared.
    #[error("unknown input `{0}`")]
    UnknownInput(String),

    /// Evaluation started without a binding for a declared input.
    #[error("missing binding for input `{0}`")]
    MissingInput(String),

    /// A binding's shape disagrees with the declared input shape.
    #[error("binding for `{name}` has shape {got:?}, expected {expected:?}")]
    BindingShape {
        name: String,
        got: Vec<usize>,
        expected: Vec<usize>,
    },

    /// Gradients were requested from a non-scalar output node.
    #[error("gradient output must be a scalar, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),

    /// A configuration value is outside its legal range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A loss or parameter became NaN/inf; the run cannot continue.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    /// A parameter set is missing an array the architecture requires.
    #[error("parameter set is missing array `{0}`")]
    MissingParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(detail: impl Into<String>) -> Self {
        Error::InvalidArgument(detail.into())
    }
}
