//! Failures carry the process exit code.

use std::fmt;

use trapnoise::Error;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_PARSE: u8 = 4;
pub const EXIT_NO_CONVERGENCE: u8 = 5;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(fields: Vec<String>) -> Self {
        Self { code: EXIT_CONFIG, message: format!("invalid configuration: {}", fields.join("; ")) }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: EXIT_IO, message: message.into() }
    }

    pub fn context(mut self, what: &str) -> Self {
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
            Error::Config(_) | Error::Domain(_) | Error::Json(_) => EXIT_CONFIG,
            Error::Io(_) => EXIT_IO,
            Error::Parse { .. } | Error::Csv(_) => EXIT_PARSE,
            Error::DegenerateData(_) | Error::NonConvergence(_) => EXIT_NO_CONVERGENCE,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}
