//! Dual-path refinement and candidate selection.
//!
//! Each sample is refined twice: the semantic path feeds the generated
//! rationale into the prompt, the syntactic path uses pseudo-code alone.
//! Both candidates are compiled and scored for consistency against the
//! reference assembly, then `select` picks the winner:
//!
//! semantic iff it compiles and (the syntactic one does not, or the
//! semantic consistency score is >= the syntactic one); otherwise
//! syntactic. Ties go to the semantic path; when neither compiles the
//! syntactic output is emitted and flagged.
//!
//! A rejected rationale disables the semantic path for that sample (no
//! refiner call is made for it); the syntactic path still runs.

use crate::backend::{ChatBackend, Completion, CompletionRequest};
use crate::config::{fill, Limits, PromptTemplates};
use crate::corpus::BenchmarkSample;
use crate::error::{Error, RejectReason, Result};
use crate::lexer::{scan, TokKind};
use crate::metric::BleuConfig;
use crate::rationale::{generate_rationale, Granularity, Rationale};
use crate::toolchain::Toolchain;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Semantic,
    Syntactic,
}

impl fmt::Display for PathKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PathKind::Semantic => "semantic",
            PathKind::Syntactic => "syntactic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub source: String,
    pub path: PathKind,
    pub compile_ok: bool,
    pub consistency: f64,
    pub rationale_used: Option<Rationale>,
    #[serde(default)]
    pub diagnostics: String,
}

impl Candidate {
    fn failed(path: PathKind, rationale_used: Option<Rationale>, diagnostics: String) -> Self {
        Self {
            source: String::new(),
            path,
            compile_ok: false,
            consistency: 0.0,
            rationale_used,
            diagnostics,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionBranch {
    SemOnlyCompiles,
    SemScoreWinsOrTies,
    SynOnlyCompiles,
    SynScoreWins,
    BothFailDefaultSyn,
}

impl fmt::Display for SelectionBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionBranch::SemOnlyCompiles => "sem_only_compiles",
            SelectionBranch::SemScoreWinsOrTies => "sem_score_wins_or_ties",
            SelectionBranch::SynOnlyCompiles => "syn_only_compiles",
            SelectionBranch::SynScoreWins => "syn_score_wins",
            SelectionBranch::BothFailDefaultSyn => "both_fail_default_syn",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDecision {
    pub chosen: Candidate,
    pub branch: SelectionBranch,
    /// Consistency scores, present only for candidates that compiled.
    pub sem_score: Option<f64>,
    pub syn_score: Option<f64>,
}

/// Pick the final output from two scored candidates.
pub fn select(sem: &Candidate, syn: &Candidate) -> SelectionDecision {
    debug_assert_eq!(sem.path, PathKind::Semantic);
    debug_assert_eq!(syn.path, PathKind::Syntactic);
    let branch = match (sem.compile_ok, syn.compile_ok) {
        (true, false) => SelectionBranch::SemOnlyCompiles,
        (true, true) if sem.consistency >= syn.consistency => SelectionBranch::SemScoreWinsOrTies,
        (true, true) => SelectionBranch::SynScoreWins,
        (false, true) => SelectionBranch::SynOnlyCompiles,
        (false, false) => SelectionBranch::BothFailDefaultSyn,
    };
    let chosen = match branch {
        SelectionBranch::SemOnlyCompiles | SelectionBranch::SemScoreWinsOrTies => sem.clone(),
        _ => syn.clone(),
    };
    SelectionDecision {
        chosen,
        branch,
        sem_score: sem.compile_ok.then_some(sem.consistency),
        syn_score: syn.compile_ok.then_some(syn.consistency),
    }
}

/// Drop everything outside the first fenced code block; text without fences
/// passes through whole.
fn strip_code_fences(text: &str) -> String {
    if !text.contains("```") {
        return text.to_string();
    }
    let mut kept = Vec::new();
    let mut in_fence = false;
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            if in_fence {
                break;
            }
            in_fence = true;
            continue;
        }
        if in_fence {
            kept.push(line);
        }
    }
    kept.join("\n")
}

const STMT_KEYWORDS: &[&str] = &["if", "while", "for", "switch", "return", "sizeof", "do", "else"];

/// Extract the first complete C function definition from model output:
/// code-fence stripping, then token scanning for `name ( ... ) {` with
/// brace balancing to the matching close. Comments and string literals
/// cannot confuse the balance. `None` when no complete definition exists.
pub fn extract_first_function(text: &str) -> Option<String> {
    let body = strip_code_fences(text);
    let tokens = scan(&body, true);
    'braces: for (i, tok) in tokens.iter().enumerate() {
        if tok.text != "{" || tok.kind != TokKind::Punct || i == 0 {
            continue;
        }
        if tokens[i - 1].text != ")" {
            continue;
        }
        // walk back across the parameter list to its opening paren
        let mut depth = 0usize;
        let mut j = i - 1;
        let open = loop {
            match tokens[j].text.as_str() {
                ")" => depth += 1,
                "(" => {
                    depth -= 1;
                    if depth == 0 {
                        break j;
                    }
                }
                _ => {}
            }
            if j == 0 {
                continue 'braces;
            }
            j -= 1;
        };
        if open == 0 {
            continue;
        }
        let name = &tokens[open - 1];
        if name.kind != TokKind::Ident || STMT_KEYWORDS.contains(&name.text.as_str()) {
            continue;
        }
        // include return-type tokens: a short run of identifiers and stars
        let mut start = open - 1;
        let mut specifiers = 0;
        while start > 0 && specifiers < 8 {
            let prev = &tokens[start - 1];
            if prev.kind == TokKind::Ident && !STMT_KEYWORDS.contains(&prev.text.as_str())
                || prev.text == "*"
            {
                start -= 1;
                specifiers += 1;
            } else {
                break;
            }
        }
        // balance braces to the end of the body
        let mut depth = 0usize;
        for tk in tokens.iter().skip(i) {
            if tk.kind != TokKind::Punct {
                continue;
            }
            match tk.text.as_str() {
                "{" => depth += 1,
                "}" => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(body[tokens[start].start..tk.end].trim().to_string());
                    }
                }
                _ => {}
            }
        }
        // unbalanced: truncated output, nothing usable further right
        return None;
    }
    None
}

/// One refinement call: build the prompt (with the rationale when present),
/// query the refiner, extract the function. A truncated completion is still
/// mined for a complete definition.
pub fn refine(
    pseudo: &str,
    rationale: Option<&Rationale>,
    backend: &dyn ChatBackend,
    templates: &PromptTemplates,
) -> Result<String> {
    let user = match rationale {
        Some(r) => fill(
            &templates.refine_with_rationale,
            &[("rationale", r.raw_comment.as_str()), ("code_snippet", pseudo)],
        ),
        None => fill(&templates.refine_plain, &[("code_snippet", pseudo)]),
    };
    let text = match backend.complete(&CompletionRequest::new(user)) {
        Ok(Completion { text }) => text,
        Err(Error::ResponseTruncated { text }) => text,
        Err(e) => return Err(e),
    };
    extract_first_function(&text).ok_or(Error::EmptyGeneration)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdpfOutcome {
    pub sem: Candidate,
    pub syn: Candidate,
    pub decision: SelectionDecision,
    pub rationale_rejected: Option<RejectReason>,
}

fn scored_candidate(
    refined: Result<String>,
    path: PathKind,
    rationale_used: Option<Rationale>,
    toolchain: &Toolchain,
    sample: &BenchmarkSample,
    bleu_cfg: &BleuConfig,
) -> Result<Candidate> {
    match refined {
        Ok(source) => {
            let score = toolchain.score_candidate(&source, sample, bleu_cfg)?;
            Ok(Candidate {
                source,
                path,
                compile_ok: score.compiled,
                consistency: score.consistency,
                rationale_used,
                diagnostics: score.diagnostics,
            })
        }
        Err(Error::EmptyGeneration) => Ok(Candidate::failed(
            path,
            rationale_used,
            "no complete function in model response".to_string(),
        )),
        Err(e) => Err(e),
    }
}

/// Full per-sample pipeline: rationale, two refinements, two scores, one
/// selection. Backend unavailability is an error for this sample only; the
/// caller records it and moves on.
#[allow(clippy::too_many_arguments)]
pub fn run_ddpf(
    sample: &BenchmarkSample,
    gen: &dyn ChatBackend,
    refiner: &dyn ChatBackend,
    toolchain: &Toolchain,
    bleu_cfg: &BleuConfig,
    templates: &PromptTemplates,
    limits: &Limits,
    granularity: Granularity,
) -> Result<DdpfOutcome> {
    let (rationale, rationale_rejected) = match generate_rationale(
        &sample.pseudo_code,
        gen,
        granularity,
        templates,
        limits.max_rationale_tokens,
    ) {
        Ok(r) => (Some(r), None),
        Err(Error::RationaleRejected { reason }) => (None, Some(reason)),
        Err(e) => return Err(e),
    };
    let sem = match &rationale {
        Some(r) => scored_candidate(
            refine(&sample.pseudo_code, Some(r), refiner, templates),
            PathKind::Semantic,
            Some(r.clone()),
            toolchain,
            sample,
            bleu_cfg,
        )?,
        None => Candidate::failed(
            PathKind::Semantic,
            None,
            "rationale rejected; semantic path skipped".to_string(),
        ),
    };
    let syn = scored_candidate(
        refine(&sample.pseudo_code, None, refiner, templates),
        PathKind::Syntactic,
        None,
        toolchain,
        sample,
        bleu_cfg,
    )?;
    let decision = select(&sem, &syn);
    Ok(DdpfOutcome { sem, syn, decision, rationale_rejected })
}
