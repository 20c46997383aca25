use std::fmt::Display;

use serde::Serialize;

/// Exit-code class of a failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Bad config, bad arguments, or parameters outside the model's domain.
    Validation,
    /// The numerics failed or could not certify a bound.
    Numerical,
    /// The run finished without a decision.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

impl CliError {
    pub fn validation(e: impl Display) -> Self {
        Self { kind: ErrorKind::Validation, message: e.to_string(), details: None }
    }

    pub fn numerical(e: impl Display) -> Self {
        Self { kind: ErrorKind::Numerical, message: e.to_string(), details: None }
    }

    pub fn inconclusive(e: impl Display) -> Self {
        Self { kind: ErrorKind::Inconclusive, message: e.to_string(), details: None }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::numerical(format!("{}: {e}", path.display()))
    }

    pub fn with_details(mut self, details: impl Serialize) -> Self {
        self.details = serde_json::to_value(details).ok();
        self
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Inconclusive => 4,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}
