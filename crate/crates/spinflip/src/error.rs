/// Error type shared across the crate.
///
/// The three variants map onto the CLI exit codes: domain/validation
/// problems exit 1, failed computations and oracle checks exit 2, I/O exits
/// 3 (0 is success).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid input: bad quantum numbers, out-of-range parameters,
    /// malformed config files.
    #[error("invalid input: {0}")]
    Domain(String),

    /// A computation or oracle check failed to converge or to meet its
    /// hard tolerance.
    #[error("computation failed: {0}")]
    Computation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn computation(msg: impl Into<String>) -> Self {
        Error::Computation(msg.into())
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Domain(_) => 1,
            Error::Computation(_) => 2,
            Error::Io(_) => 3,
        }
    }
}
