use std::fmt::Debug;

use serde::Serialize;

/// Invalid input or configuration.
pub const EXIT_INPUT: i32 = 2;
/// A computation failed on valid input.
pub const EXIT_COMPUTE: i32 = 3;

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub exit_code: i32,
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn input(kind: impl Into<String>, message: impl Into<String>) -> Self {
        CliError {
            exit_code: EXIT_INPUT,
            kind: kind.into(),
            message: message.into(),
        }
    }

    pub fn compute(kind: impl Into<String>, message: impl Into<String>) -> Self {
        CliError {
            exit_code: EXIT_COMPUTE,
            kind: kind.into(),
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

/// Enum variant name from a derived `Debug` rendering.
fn variant_name<E: Debug>(e: &E) -> String {
    let text = format!("{e:?}");
    let end = text.find(|c: char| !c.is_alphanumeric() && c != '_').unwrap_or(text.len());
    text[..end].to_string()
}

/// Library error caused by bad input.
pub fn input_err<E: Debug + std::fmt::Display>(e: E) -> CliError {
    CliError::input(variant_name(&e), e.to_string())
}

/// Library error raised while computing on validated input.
pub fn compute_err<E: Debug + std::fmt::Display>(e: E) -> CliError {
    CliError::compute(variant_name(&e), e.to_string())
}
