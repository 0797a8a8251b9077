use std::io;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration failed validation.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A numerical routine failed to make progress.
    #[error("numerical failure at t = {t}: {reason}")]
    Numerical { t: f64, reason: String },

    /// The chain has no unique stationary law.
    #[error("absorbing chain has no unique stationary law")]
    NoStationaryLaw,

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status for the command-line tool: 3 for numerical
    /// failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
