use std::path::Path;

use serde::Serialize;

/// Failure of one subcommand, printed to stderr as a single JSON object.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }

    pub fn config(message: String) -> Self {
        Self::new("config", message)
    }

    pub fn config_from(e: impl std::fmt::Display) -> Self {
        Self::new("config", e.to_string())
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("io", format!("{}: {e}", path.display()))
    }

    /// A prerequisite artifact of an earlier stage is absent.
    pub fn missing(name: &str, produced_by: &str) -> Self {
        Self::new("missing_artifact", format!("missing {name} (run `gradeguard {produced_by}` first)"))
    }

    pub fn corrupt(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::new("corrupt_artifact", format!("{}: {e}", path.display()))
    }

    pub fn to_json(&self, subcommand: &str) -> String {
        serde_json::json!({ "error": self.kind, "message": self.message, "subcommand": subcommand }).to_string()
    }
}

macro_rules! module_errors {
    ($($ty:ty => $kind:literal),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                Self::new($kind, e.to_string())
            }
        })*
    };
}

module_errors! {
    gradeguard::corpus::CorpusError => "corpus",
    gradeguard::prompting::PromptError => "prompting",
    gradeguard::crm::CrmError => "crm",
    gradeguard::irm::IrmError => "irm",
    gradeguard::srgm::SrgmError => "srgm",
    gradeguard::pipeline::PipelineError => "pipeline",
    gradeguard_review::ReviewError => "review_service",
}
