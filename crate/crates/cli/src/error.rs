//! Error-to-exit-code mapping: 0 success, 2 usage, 3 numeric failure,
//! 4 I/O.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<funkrig::Error> for CliError {
    fn from(e: funkrig::Error) -> Self {
        match e {
            funkrig::Error::InvalidParameter(_)
            | funkrig::Error::DimensionMismatch(_)
            | funkrig::Error::BasisMismatch(_) => CliError::Usage(e.to_string()),
            funkrig::Error::DegenerateDesign(_) | funkrig::Error::IllConditioned(_) => {
                CliError::Numeric(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
