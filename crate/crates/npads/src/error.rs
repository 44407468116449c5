//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed or unusable input data (bad WAV, empty directory, bad cache file, ...).
    #[error("{0}")]
    Data(String),

    /// Shape disagreement between matrices, networks, or feature sets.
    #[error("dimension mismatch: {0}")]
    Dim(String),

    /// Non-finite values or other numerical breakdown.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Algorithm 1 hit its attempt cap: the latent threshold rejects
    /// essentially everything the proposal can produce.
    #[error("rejection budget exhausted")]
    RejectionBudget,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for data problems, 3 for numerical aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Data(_) | Error::Dim(_) => 2,
            Error::Numerical(_) | Error::RejectionBudget => 3,
        }
    }
}
