use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// The variants split along the CLI exit-code boundary: everything except
/// [`Error::Numerical`] is a caller or configuration problem (exit code 2),
/// numerical failures map to exit code 3.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A point outside the domain where the quantity is defined, e.g. the
    /// singular drift evaluated at `|x| >= 1`.
    #[error("domain error in {quantity}: {detail}")]
    Domain {
        quantity: &'static str,
        detail: String,
    },

    /// Invalid model or numerical parameters.
    #[error("invalid parameter `{name}` = {value}: {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: String,
    },

    /// A precondition of an operation was violated by otherwise valid inputs.
    #[error("contract violation in {operation}: {detail}")]
    Contract {
        operation: &'static str,
        detail: String,
    },

    /// The requested parameter regime is not modelled.
    #[error("unsupported regime: {0}")]
    Unsupported(String),

    /// Quadrature non-convergence, overflow, non-finite state, etc.
    #[error("numerical error in {quantity}: {detail}")]
    Numerical {
        quantity: &'static str,
        detail: String,
    },

    /// Configuration file or command-line problems.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(quantity: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            quantity,
            detail: detail.into(),
        }
    }

    pub(crate) fn param(name: &'static str, value: f64, constraint: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            value,
            constraint: constraint.into(),
        }
    }

    pub(crate) fn contract(operation: &'static str, detail: impl Into<String>) -> Self {
        Error::Contract {
            operation,
            detail: detail.into(),
        }
    }

    pub(crate) fn numerical(quantity: &'static str, detail: impl Into<String>) -> Self {
        Error::Numerical {
            quantity,
            detail: detail.into(),
        }
    }

    /// Process exit code used by the `bnlab` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical { .. } => 3,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
