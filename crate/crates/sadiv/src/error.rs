//! Error taxonomy shared by every module in the crate.
//!
//! The variants map one-to-one onto the CLI exit-code convention:
//!
//! | Variant                  | Meaning                                         | Exit code |
//! |--------------------------|-------------------------------------------------|-----------|
//! | [`Error::Domain`]        | argument outside the mathematical domain        | 64        |
//! | [`Error::Config`]        | inconsistent or incomplete configuration        | 64        |
//! | [`Error::Guard`]         | numerical guard tripped (CFL bound, non-finite) | 2         |
//! | [`Error::Io`] / [`Error::Parse`] | filesystem / JSON problems                | 64        |
//!
//! Property-check failures are not errors: they are reported through
//! [`crate::verify::PropertyReport`] and mapped to exit code 1 by the CLI.

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation
    /// (e.g. a hazard queried at w < 0, a probe point with w > s).
    #[error("domain error: {0}")]
    Domain(String),

    /// The configuration is internally inconsistent or incomplete
    /// (e.g. nonpositive model parameters in strict mode, n_paths < 2,
    /// overlapping Monte Carlo index ranges).
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical guard tripped: the explicit scheme's stability bound is
    /// violated or a non-finite value appeared mid-computation.
    #[error("numerical guard: {0}")]
    Guard(String),

    /// Underlying I/O failure while reading configs or writing outputs.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

impl Error {
    /// The process exit code this error maps to under the CLI convention.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Guard(_) => 2,
            Error::Domain(_) | Error::Config(_) | Error::Io(_) | Error::Parse(_) => 64,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
