//! Refinement of decompiler pseudo-code into re-executable C.
//!
//! The pipeline recovers a short semantic rationale for each decompiled
//! function, refines the pseudo-code twice (with and without the rationale),
//! verifies both candidates by recompiling and comparing normalized
//! disassembly against the original binary, and keeps the better one.
//! Supporting modules cover training-corpus assembly, benchmark evaluation
//! with per-level reporting, and failure-mode analysis.
//!
//! Model access goes through a narrow chat-completion trait with an HTTP
//! implementation and a fixture-replay implementation, so every pipeline
//! stage runs offline and deterministically in tests.

pub mod analysis;
pub mod asm;
pub mod backend;
pub mod config;
pub mod corpus;
pub mod dualpath;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod lexer;
pub mod metric;
pub mod rationale;
pub mod toolchain;
pub mod training;

pub use error::{Error, Result};
