//! Error types shared across the pipeline.

use std::path::PathBuf;

/// Why a generated rationale was rejected by the validator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Response is not exactly one `/* ... */` block.
    InvalidComment,
    /// Required fields (Function/Purpose, plus the detailed triple) missing.
    MissingFields,
    /// Lexical token count exceeds the configured limit.
    OverLength,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RejectReason::InvalidComment => "invalid_comment",
            RejectReason::MissingFields => "missing_fields",
            RejectReason::OverLength => "over_length",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("toolchain binary not found: {tool}")]
    ToolchainMissing { tool: String },

    #[error("disassembly failed: {detail}")]
    DisassemblyFailed { detail: String },

    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("duplicate sample id: {id}")]
    DuplicateId { id: String },

    #[error("empty input")]
    EmptyInput,

    #[error("sample {id} has no reference assembly")]
    MissingReferenceAsm { id: String },

    #[error("backend unavailable: {detail}")]
    BackendUnavailable { detail: String },

    #[error("response truncated at the token limit")]
    ResponseTruncated { text: String },

    #[error("fixture directory missing: {path}")]
    FixtureDirMissing { path: PathBuf },

    #[error("rationale rejected: {reason}")]
    RationaleRejected { reason: RejectReason },

    #[error("no complete C function found in the model response")]
    EmptyGeneration,

    #[error("record id {id} not present in the sample set")]
    JoinMismatch { id: String },

    #[error("invalid configuration: {detail}")]
    InvalidConfig { detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
