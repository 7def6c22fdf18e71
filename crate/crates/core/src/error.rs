//! Error type shared by the library and the CLI.

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the simulator.
///
/// The CLI maps these onto process exit codes: configuration errors exit with 2,
/// numerical/runtime failures with 3, and acceptance-threshold failures with 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid parameters, bands, or input data (caller mistake).
    #[error("config error: {0}")]
    Config(String),

    /// A computation failed at runtime (NaN/Inf blow-up, non-convergence, I/O).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A verification ran to completion but the measured quantity missed its
    /// acceptance threshold.
    #[error("threshold failure: {0}")]
    Threshold(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Process exit code used by the CLI for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Toml(_) => 2,
            Error::Numerical(_) | Error::Io(_) | Error::Json(_) => 3,
            Error::Threshold(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Error {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Error {
        Error::Numerical(msg.into())
    }

    pub fn threshold(msg: impl Into<String>) -> Error {
        Error::Threshold(msg.into())
    }
}
