use std::fmt;
use std::io;
use std::path::Path;

use orderprobe::datagen::DatagenError;
use orderprobe::oracle::records::RecordError;
use orderprobe::{AnalysisError, EnumerateError, GrammarError, OracleError};

pub const EXIT_INVALID: i32 = 1;
pub const EXIT_COVERAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_MISSING: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(EXIT_INVALID, message)
    }

    pub fn io(path: &Path, err: io::Error) -> Self {
        Self::new(EXIT_IO, format!("{}: {err}", path.display()))
    }

    pub fn with_context(mut self, context: impl fmt::Display) -> Self {
        self.message = format!("{context}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<GrammarError> for CliError {
    fn from(e: GrammarError) -> Self {
        match e {
            GrammarError::Invalid(violations) => {
                let mut message = String::from("grammar is invalid");
                for v in &violations {
                    message.push_str("\n  ");
                    message.push_str(&v.to_string());
                }
                CliError::invalid(message)
            }
            other => CliError::invalid(other.to_string()),
        }
    }
}

impl From<EnumerateError> for CliError {
    fn from(e: EnumerateError) -> Self {
        let code = match e {
            EnumerateError::CoverageUnreachable { .. } => EXIT_COVERAGE,
            _ => EXIT_INVALID,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        CliError::invalid(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::MissingInstances(_) => CliError::new(EXIT_MISSING, e.to_string()),
            AnalysisError::Enumerate(inner) => inner.into(),
            other => CliError::invalid(other.to_string()),
        }
    }
}

impl From<RecordError> for CliError {
    fn from(e: RecordError) -> Self {
        CliError::invalid(e.to_string())
    }
}

impl From<DatagenError> for CliError {
    fn from(e: DatagenError) -> Self {
        CliError::invalid(e.to_string())
    }
}
