use std::path::Path;

use serde::Serialize;

/// Failure of a CLI run, reported as JSON on stderr.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: u8,
}

impl CliError {
    pub const USAGE: u8 = 2;
    pub const NUMERICAL: u8 = 3;
    pub const OTHER: u8 = 1;

    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: "usage",
            message: message.into(),
            exit_code: Self::USAGE,
        }
    }

    pub fn other(message: impl Into<String>) -> Self {
        Self {
            kind: "error",
            message: message.into(),
            exit_code: Self::OTHER,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            kind: "io",
            message: format!("{}: {e}", path.display()),
            exit_code: Self::OTHER,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl From<fishbridge_core::Error> for CliError {
    fn from(e: fishbridge_core::Error) -> Self {
        use fishbridge_core::Error as E;
        let kind = match &e {
            E::Domain(_) => "domain",
            E::Argument(_) => "argument",
            E::Divergence { .. } => "divergence",
            E::Numerical(_) => "numerical",
            E::NonFinite { .. } => "non_finite",
            E::Degenerate(_) => "degenerate",
            E::Config(_) => "config",
            E::Io(_) => "io",
            E::Csv(_) => "csv",
            E::Json(_) => "json",
        };
        let exit_code = if e.is_numerical() { Self::NUMERICAL } else { Self::OTHER };
        Self {
            kind,
            message: e.to_string(),
            exit_code,
        }
    }
}
