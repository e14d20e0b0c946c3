//! Similarity and aggregate quality metrics.
//!
//! `bleu` is a single-reference BLEU with modified n-gram precision, a
//! geometric mean over the n-gram orders the candidate actually has, and the
//! standard brevity penalty `exp(min(0, 1 - |ref| / |cand|))`. An empty
//! candidate scores 0. With `Smoothing::None` any zero precision zeroes the
//! whole score; `AddEpsilon` substitutes a tiny constant instead so near
//! misses at high orders still rank.
//!
//! `consistency_score` is BLEU-4 between normalized disassembly of a
//! recompiled candidate and the normalized reference assembly. Candidates
//! that fail to compile score 0 by definition.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const BLEU_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    None,
    AddEpsilon,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct BleuConfig {
    pub max_n: usize,
    pub smoothing: Smoothing,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self { max_n: 4, smoothing: Smoothing::AddEpsilon }
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut map = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *map.entry(window).or_insert(0) += 1;
        }
    }
    map
}

/// Modified precision for one n-gram order: clipped matches / candidate n-grams.
fn modified_precision(
    candidate: &[String],
    reference: &[String],
    n: usize,
) -> Option<(usize, usize)> {
    if candidate.len() < n {
        return None;
    }
    let total = candidate.len() - n + 1;
    let ref_counts = ngram_counts(reference, n);
    let cand_counts = ngram_counts(candidate, n);
    let matched: usize = cand_counts
        .iter()
        .map(|(gram, count)| (*count).min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    Some((matched, total))
}

/// Single-reference BLEU over pre-tokenized sequences, in `[0, 1]`.
pub fn bleu(candidate: &[String], reference: &[String], config: &BleuConfig) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut orders = 0usize;
    for n in 1..=config.max_n {
        let Some((matched, total)) = modified_precision(candidate, reference, n) else {
            break;
        };
        let mut p = matched as f64 / total as f64;
        if p == 0.0 {
            match config.smoothing {
                Smoothing::None => return 0.0,
                Smoothing::AddEpsilon => p = BLEU_EPSILON,
            }
        }
        log_sum += p.ln();
        orders += 1;
    }
    if orders == 0 {
        return 0.0;
    }
    let geo_mean = (log_sum / orders as f64).exp();
    let bp = if candidate.len() >= reference.len() {
        1.0
    } else {
        (1.0 - reference.len() as f64 / candidate.len() as f64).exp()
    };
    (geo_mean * bp).clamp(0.0, 1.0)
}

/// BLEU-4 with epsilon smoothing over whitespace tokenization of two C sources.
pub fn source_bleu4(candidate: &str, reference: &str) -> f64 {
    let tok = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
    bleu(&tok(candidate), &tok(reference), &BleuConfig::default())
}

/// Share of samples whose linked candidate+harness binary exited 0.
pub fn re_exec_rate(passes: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    passes as f64 / total as f64
}

/// Round half-up to two decimals, for percent display.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}
