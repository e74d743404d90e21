//! Error type shared across the crate.

use thiserror::Error;

/// Errors surfaced by configuration validation, codebook/pilot construction,
/// the estimators, and the simulation harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent or unsatisfiable system parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// A codebook file failed to parse or violates its contract.
    #[error("codebook error: {0}")]
    Codebook(String),

    /// The per-user Gram block is singular; the channel is not identifiable
    /// from pilots with the given parameters.
    #[error("identifiability error: {0}")]
    Identifiability(String),

    /// Filesystem or serialization failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed JSON in a config or codebook file.
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: config-class errors map to 2,
    /// I/O-class errors to 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Codebook(_) | Error::Identifiability(_) => 2,
            Error::Io(_) | Error::Parse(_) => 3,
        }
    }
}
