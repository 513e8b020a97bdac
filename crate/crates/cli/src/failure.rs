use std::fmt;

use mpo_core::Error;

pub const EXIT_IO: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_PROPERTY: u8 = 3;

/// A command failure carrying its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn io(message: impl Into<String>) -> Self {
        Self { code: EXIT_IO, message: message.into() }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self { code: EXIT_INVALID, message: message.into() }
    }

    pub fn property(message: impl Into<String>) -> Self {
        Self { code: EXIT_PROPERTY, message: message.into() }
    }

    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_)
            | Error::BadMagic(_)
            | Error::UnsupportedVersion(_)
            | Error::ChecksumMismatch { .. }
            | Error::CorruptBundle(_) => EXIT_IO,
            Error::Json(j) if j.is_io() => EXIT_IO,
            Error::SvdNoConvergence(_) => EXIT_PROPERTY,
            _ => EXIT_INVALID,
        };
        Self { code, message: e.to_string() }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;
