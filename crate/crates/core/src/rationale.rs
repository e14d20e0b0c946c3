//! Header-comment rationales: prompt construction, parsing, validation.
//!
//! A rationale is the `/* ... */` block a generator model writes for a
//! pseudo-code function. The validator accepts a response iff it is exactly
//! one comment block (nothing outside it), names the function, states a
//! purpose, and stays under the token budget. Detailed granularity
//! additionally requires Inputs, Outputs and Implicit Operations fields.
//! Rejections carry a reason code so corpus filtering can account for every
//! dropped pair.

use crate::backend::{ChatBackend, Completion, CompletionRequest};
use crate::config::{fill, PromptTemplates};
use crate::error::{Error, RejectReason, Result};
use crate::lexer::lexical_token_count;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Concise,
    Detailed,
}

impl std::str::FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concise" => Ok(Granularity::Concise),
            "detailed" => Ok(Granularity::Detailed),
            other => Err(Error::InvalidConfig { detail: format!("unknown granularity {other:?}") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetailedFields {
    pub inputs: String,
    pub outputs: String,
    pub implicit_operations: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rationale {
    pub function_name: String,
    pub purpose: String,
    pub detailed_fields: Option<DetailedFields>,
    pub granularity: Granularity,
    /// The verbatim comment block, trimmed; always `/* ... */`.
    pub raw_comment: String,
}

/// Build the generator request for one pseudo-code function.
pub fn build_rationale_prompt(
    pseudo: &str,
    granularity: Granularity,
    templates: &PromptTemplates,
) -> CompletionRequest {
    let template = match granularity {
        Granularity::Concise => &templates.rationale_concise,
        Granularity::Detailed => &templates.rationale_detailed,
    };
    CompletionRequest::new(fill(template, &[("code_snippet", pseudo)]))
}

fn reject(reason: RejectReason) -> Error {
    Error::RationaleRejected { reason }
}

#[derive(PartialEq, Clone, Copy)]
enum Field {
    None,
    Function,
    Purpose,
    Inputs,
    Outputs,
    Implicit,
}

/// Strip comment-decoration and bullet prefixes from one line.
fn clean_line(line: &str) -> &str {
    let s = line.trim().trim_start_matches('*').trim_start();
    s.strip_prefix("- ").unwrap_or(s).trim_start()
}

/// Validate a generator response and extract its fields.
///
/// Checks run in a fixed order so each bad input maps to one reason:
/// block structure, then required fields, then token budget.
pub fn parse_and_validate(
    text: &str,
    granularity: Granularity,
    max_tokens: usize,
) -> Result<Rationale> {
    let trimmed = text.trim();
    if trimmed.len() < 4
        || !trimmed.starts_with("/*")
        || !trimmed.ends_with("*/")
        || trimmed.matches("*/").count() != 1
    {
        return Err(reject(RejectReason::InvalidComment));
    }
    let inner = &trimmed[2..trimmed.len() - 2];

    let mut function_name = String::new();
    let mut purpose = String::new();
    let mut inputs = String::new();
    let mut outputs = String::new();
    let mut implicit = String::new();
    let mut current = Field::None;
    for line in inner.lines() {
        let line = clean_line(line);
        if line.is_empty() {
            continue;
        }
        let hit = [
            ("Function:", Field::Function),
            ("Purpose:", Field::Purpose),
            ("Inputs:", Field::Inputs),
            ("Outputs:", Field::Outputs),
            ("Implicit Operations:", Field::Implicit),
        ]
        .iter()
        .find_map(|(key, field)| line.strip_prefix(key).map(|rest| (*field, rest.trim())));
        let (field, value) = match hit {
            Some(found) => found,
            None if current != Field::None => (current, line),
            None => continue,
        };
        let slot = match field {
            Field::Function => &mut function_name,
            Field::Purpose => &mut purpose,
            Field::Inputs => &mut inputs,
            Field::Outputs => &mut outputs,
            Field::Implicit => &mut implicit,
            Field::None => unreachable!(),
        };
        if !slot.is_empty() && !value.is_empty() {
            slot.push(' ');
        }
        slot.push_str(value);
        current = field;
    }

    if function_name.is_empty() || purpose.is_empty() {
        return Err(reject(RejectReason::MissingFields));
    }
    let detailed_fields = match granularity {
        Granularity::Concise => None,
        Granularity::Detailed => {
            if inputs.is_empty() || outputs.is_empty() || implicit.is_empty() {
                return Err(reject(RejectReason::MissingFields));
            }
            Some(DetailedFields { inputs, outputs, implicit_operations: implicit })
        }
    };
    if lexical_token_count(trimmed) > max_tokens {
        return Err(reject(RejectReason::OverLength));
    }
    Ok(Rationale {
        function_name,
        purpose,
        detailed_fields,
        granularity,
        raw_comment: trimmed.to_string(),
    })
}

/// Query the generator and validate its response. A truncated completion is
/// validated as-is (an unterminated block then rejects as invalid_comment).
pub fn generate_rationale(
    pseudo: &str,
    gen: &dyn ChatBackend,
    granularity: Granularity,
    templates: &PromptTemplates,
    max_tokens: usize,
) -> Result<Rationale> {
    let request = build_rationale_prompt(pseudo, granularity, templates);
    let text = match gen.complete(&request) {
        Ok(Completion { text }) => text,
        Err(Error::ResponseTruncated { text }) => text,
        Err(e) => return Err(e),
    };
    parse_and_validate(&text, granularity, max_tokens)
}

/// Render a canonical comment block from field values, the inverse of
/// `parse_and_validate` for well-formed inputs.
pub fn compose_comment(
    function_name: &str,
    purpose: &str,
    detailed: Option<&DetailedFields>,
) -> String {
    let mut out = String::from("/*\n");
    out.push_str(&format!(" * Function: {function_name}\n"));
    out.push_str(&format!(" * Purpose: {purpose}\n"));
    if let Some(fields) = detailed {
        out.push_str(&format!(" * Inputs: {}\n", fields.inputs));
        out.push_str(&format!(" * Outputs: {}\n", fields.outputs));
        out.push_str(&format!(" * Implicit Operations: {}\n", fields.implicit_operations));
    }
    out.push_str(" */");
    out
}
