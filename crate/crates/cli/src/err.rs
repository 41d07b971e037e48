//! Error envelope for all commands: every failure serializes to one JSON
//! object on stderr with a stable `kind` for scripting.

use std::fmt::Display;

#[derive(Debug)]
pub struct CliError {
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn msg(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.to_string(),
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.message, "kind": self.kind }).to_string()
    }
}

/// Attach an error-kind label while converting any displayable error.
pub trait Ctx<T> {
    fn ctx(self, kind: &str) -> Result<T, CliError>;
}

impl<T, E: Display> Ctx<T> for Result<T, E> {
    fn ctx(self, kind: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError {
            kind: kind.to_string(),
            message: e.to_string(),
        })
    }
}
