//! Failure-mode analysis: attribute re-execution results to code patterns
//! in the ground truth and to pseudo-code length buckets.
//!
//! Classification is token-based on the shared C scanner, so comments and
//! string literals never produce false positives. The rules distinguish
//! bitwise operators from address-of, and `do ... while` tails from
//! free-standing `while` loops.

use crate::corpus::BenchmarkSample;
use crate::error::{Error, Result};
use crate::harness::EvalRecord;
use crate::lexer::{lexical_token_count, scan, Tok, TokKind};
use crate::metric::re_exec_rate;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternTag {
    IfCondition,
    WhileLoop,
    BitwiseOps,
    DoWhileLoop,
    MemoryMgmt,
}

impl PatternTag {
    pub const ALL: [PatternTag; 5] = [
        PatternTag::IfCondition,
        PatternTag::WhileLoop,
        PatternTag::BitwiseOps,
        PatternTag::DoWhileLoop,
        PatternTag::MemoryMgmt,
    ];
}

impl fmt::Display for PatternTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternTag::IfCondition => "if_condition",
            PatternTag::WhileLoop => "while_loop",
            PatternTag::BitwiseOps => "bitwise_ops",
            PatternTag::DoWhileLoop => "do_while_loop",
            PatternTag::MemoryMgmt => "memory_mgmt",
        })
    }
}

const MEMORY_FNS: &[&str] = &["malloc", "calloc", "realloc", "free", "memcpy", "memmove", "memset"];

/// Operators that are bitwise wherever they appear. `&` is handled apart
/// because it doubles as address-of; `&&` and `||` lex as single tokens and
/// never reach these checks.
const ALWAYS_BITWISE: &[&str] = &["~", "^", "^=", "|", "|=", "&=", "<<", "<<=", ">>", ">>="];

/// `&` is binary (bitwise AND) exactly when the preceding token ends an
/// operand.
fn ends_operand(tok: &Tok) -> bool {
    match tok.kind {
        TokKind::Ident | TokKind::Number | TokKind::Str | TokKind::Char => true,
        TokKind::Punct => tok.text == ")" || tok.text == "]",
    }
}

/// Find the token index of the `while` that closes the `do` body starting
/// at `start` (the token after `do`), or `None` for malformed input.
fn do_tail_while(tokens: &[Tok], start: usize) -> Option<usize> {
    if start >= tokens.len() {
        return None;
    }
    if tokens[start].text == "{" {
        let mut depth = 0usize;
        for (k, tok) in tokens.iter().enumerate().skip(start) {
            if tok.kind != TokKind::Punct {
                continue;
            }
            match tok.text.as_str() {
                "{" => depth += 1,
                "}" => {
                    depth -= 1;
                    if depth == 0 {
                        return (tokens.get(k + 1)?.text == "while").then_some(k + 1);
                    }
                }
                _ => {}
            }
        }
        return None;
    }
    // unbraced body: one statement, ended by the first `;` outside nested
    // parens or braces
    let mut parens = 0i64;
    let mut braces = 0i64;
    for (k, tok) in tokens.iter().enumerate().skip(start) {
        if tok.kind != TokKind::Punct {
            continue;
        }
        match tok.text.as_str() {
            "(" => parens += 1,
            ")" => parens -= 1,
            "{" => braces += 1,
            "}" => braces -= 1,
            ";" if parens == 0 && braces == 0 => {
                return (tokens.get(k + 1)?.text == "while").then_some(k + 1);
            }
            _ => {}
        }
    }
    None
}

/// Classify the control-flow and library patterns present in a C function.
pub fn classify_patterns(source: &str) -> BTreeSet<PatternTag> {
    let tokens = scan(source, true);
    let mut tags = BTreeSet::new();
    let mut do_tails: BTreeSet<usize> = BTreeSet::new();
    for (i, tok) in tokens.iter().enumerate() {
        if tok.kind == TokKind::Ident && tok.text == "do" {
            if let Some(tail) = do_tail_while(&tokens, i + 1) {
                tags.insert(PatternTag::DoWhileLoop);
                do_tails.insert(tail);
            }
        }
    }
    for (i, tok) in tokens.iter().enumerate() {
        match tok.kind {
            TokKind::Ident => match tok.text.as_str() {
                "if" => {
                    let chained = i > 0 && tokens[i - 1].text == "else";
                    if !chained {
                        tags.insert(PatternTag::IfCondition);
                    }
                }
                "while" => {
                    if !do_tails.contains(&i) {
                        tags.insert(PatternTag::WhileLoop);
                    }
                }
                name if MEMORY_FNS.contains(&name)
                    && tokens.get(i + 1).is_some_and(|t| t.text == "(") =>
                {
                    tags.insert(PatternTag::MemoryMgmt);
                }
                _ => {}
            },
            TokKind::Punct => {
                let bitwise = ALWAYS_BITWISE.contains(&tok.text.as_str())
                    || (tok.text == "&" && i > 0 && ends_operand(&tokens[i - 1]));
                if bitwise {
                    tags.insert(PatternTag::BitwiseOps);
                }
            }
            _ => {}
        }
    }
    tags
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternRow {
    pub tag: PatternTag,
    pub total: usize,
    pub failures: usize,
    /// failures / total; absent when no sample carries the tag.
    pub failure_rate: Option<f64>,
}

fn sample_index(samples: &[BenchmarkSample]) -> HashMap<&str, &BenchmarkSample> {
    samples.iter().map(|s| (s.id.as_str(), s)).collect()
}

/// Failure rate per ground-truth pattern: a failing record increments the
/// failure count of every tag its sample's ground truth shows.
pub fn failure_by_pattern(
    records: &[EvalRecord],
    samples: &[BenchmarkSample],
) -> Result<Vec<PatternRow>> {
    let by_id = sample_index(samples);
    let mut counts: BTreeMap<PatternTag, (usize, usize)> = BTreeMap::new();
    for record in records {
        let sample = by_id
            .get(record.sample_id.as_str())
            .ok_or_else(|| Error::JoinMismatch { id: record.sample_id.clone() })?;
        for tag in classify_patterns(&sample.ground_truth) {
            let entry = counts.entry(tag).or_default();
            entry.0 += 1;
            entry.1 += !record.re_exec_pass as usize;
        }
    }
    Ok(PatternTag::ALL
        .iter()
        .map(|tag| {
            let (total, failures) = counts.get(tag).copied().unwrap_or((0, 0));
            PatternRow {
                tag: *tag,
                total,
                failures,
                failure_rate: (total > 0).then(|| failures as f64 / total as f64),
            }
        })
        .collect())
}

/// Length-bucket boundaries in lexical tokens of the pseudo-code.
pub const DEFAULT_LENGTH_EDGES: [usize; 8] = [50, 100, 200, 500, 1000, 2000, 5000, 10000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub bucket: String,
    pub lo: usize,
    /// Exclusive upper bound; `None` for the open-ended final bucket.
    pub hi: Option<usize>,
    pub n: usize,
    pub passes: usize,
    /// Absent for empty buckets.
    pub re_exec_rate: Option<f64>,
}

fn bucket_label(lo: usize, hi: Option<usize>) -> String {
    match hi {
        Some(hi) => format!("{lo}-{}", hi - 1),
        None => format!("{lo}+"),
    }
}

/// Re-execution rate by pseudo-code length. Buckets are half-open
/// `[lo, hi)` intervals derived from `edges`, plus the open-ended tail.
/// Every record lands in exactly one bucket.
pub fn rate_by_length(
    records: &[EvalRecord],
    samples: &[BenchmarkSample],
    edges: &[usize],
) -> Result<Vec<LengthRow>> {
    if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig {
            detail: "length edges must be non-empty and strictly increasing".to_string(),
        });
    }
    let by_id = sample_index(samples);
    let mut bounds: Vec<(usize, Option<usize>)> = Vec::with_capacity(edges.len() + 1);
    let mut lo = 0usize;
    for &edge in edges {
        bounds.push((lo, Some(edge)));
        lo = edge;
    }
    bounds.push((lo, None));

    let mut tallies = vec![(0usize, 0usize); bounds.len()];
    for record in records {
        let sample = by_id
            .get(record.sample_id.as_str())
            .ok_or_else(|| Error::JoinMismatch { id: record.sample_id.clone() })?;
        let len = lexical_token_count(&sample.pseudo_code);
        let idx = bounds
            .iter()
            .position(|(lo, hi)| len >= *lo && hi.is_none_or(|hi| len < hi))
            .expect("buckets cover all lengths");
        tallies[idx].0 += 1;
        tallies[idx].1 += record.re_exec_pass as usize;
    }
    let rows: Vec<LengthRow> = bounds
        .iter()
        .zip(&tallies)
        .map(|(&(lo, hi), &(n, passes))| LengthRow {
            bucket: bucket_label(lo, hi),
            lo,
            hi,
            n,
            passes,
            re_exec_rate: (n > 0).then(|| re_exec_rate(passes, n)),
        })
        .collect();
    debug_assert_eq!(rows.iter().map(|r| r.n).sum::<usize>(), records.len());
    Ok(rows)
}

fn fmt_rate(rate: Option<f64>) -> String {
    rate.map(|r| format!("{r:.4}")).unwrap_or_default()
}

pub fn patterns_csv(rows: &[PatternRow]) -> String {
    let mut out = String::from("pattern,total,failures,failure_rate\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.tag,
            row.total,
            row.failures,
            fmt_rate(row.failure_rate)
        ));
    }
    out
}

pub fn length_curve_csv(rows: &[LengthRow]) -> String {
    let mut out = String::from("bucket,n,passes,re_exec_rate\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.bucket,
            row.n,
            row.passes,
            fmt_rate(row.re_exec_rate)
        ));
    }
    out
}
