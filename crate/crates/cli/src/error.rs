use std::fmt;

use crackdet::Error;
use serde::Serialize;

/// A failure mapped to the process exit status.
#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn bad_args(message: impl Into<String>) -> Self {
        Self { kind: "bad_arguments", message: message.into() }
    }

    pub fn contract(message: impl Into<String>) -> Self {
        Self { kind: "contract", message: message.into() }
    }

    pub fn format(path: &std::path::Path, message: &str) -> Self {
        Self { kind: "format", message: format!("{}: {message}", path.display()) }
    }

    /// Prefixes the message with the file it concerns.
    pub fn with_path(mut self, path: &std::path::Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            "bad_arguments" => 2,
            "missing_input" | "format" => 3,
            "contract" => 4,
            _ => 5,
        }
    }

    /// Single-line JSON for scripts.
    pub fn to_line(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            error: &'a str,
            exit_code: i32,
            message: &'a str,
        }
        serde_json::to_string(&Line { error: self.kind, exit_code: self.exit_code(), message: &self.message })
            .expect("plain strings serialize")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::Io { .. } => "missing_input",
            Error::Format { .. } | Error::Json(_) => "format",
            Error::Parameter(_) => "bad_arguments",
            Error::Contract(_) => "contract",
            Error::Numeric(_) => "numeric",
        };
        Self { kind, message: e.to_string() }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e).into()
    }
}

pub type CliResult<T> = Result<T, CliError>;
