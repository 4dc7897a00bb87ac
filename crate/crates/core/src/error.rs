use thiserror::Error;

use crate::model::Criticality;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("operation requires {expected} regime, parameters are {actual:?}")]
    Regime {
        expected: &'static str,
        actual: Criticality,
    },

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("degenerate path: {0}")]
    DegeneratePath(String),

    #[error("determinant condition violated: int_y * int_inv_y - T^2 = {det:e}")]
    DeterminantNonpositive { det: f64 },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("replicate {index}: {source}")]
    Replicate {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed path csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
