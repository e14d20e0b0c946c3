//! Training corpus construction.
//!
//! Pairs of (pseudo-code, ground-truth source) become instruction-tuning
//! rows: `{"instruction", "input", "output"}` JSONL. The input carries the
//! generated rationale before the pseudo-code (never after); three modes
//! control what the model is trained to emit:
//!
//! - `source_only`: output is the ground truth alone;
//! - `full_distillation`: output is the rationale followed by the ground
//!   truth, so the model learns to reproduce both;
//! - `no_rationale`: input is bare pseudo-code, no generator calls at all
//!   (the plain-refiner training condition).
//!
//! Every dropped pair is counted by reason, and `kept + dropped` must equal
//! the number of pairs processed; that accounting is a hard assertion.

use crate::backend::ChatBackend;
use crate::config::{Limits, PromptTemplates, REFINE_INSTRUCTION};
use crate::error::{Error, RejectReason, Result};
use crate::lexer::lexical_token_count;
use crate::rationale::{generate_rationale, DetailedFields, Granularity, Rationale};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusMode {
    #[default]
    SourceOnly,
    FullDistillation,
    NoRationale,
}

impl std::str::FromStr for CorpusMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source_only" => Ok(CorpusMode::SourceOnly),
            "full_distillation" => Ok(CorpusMode::FullDistillation),
            "no_rationale" => Ok(CorpusMode::NoRationale),
            other => Err(Error::InvalidConfig { detail: format!("unknown corpus mode {other:?}") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub instruction: String,
    pub input: String,
    pub output: String,
    #[serde(skip)]
    pub mode: CorpusMode,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub kept: usize,
    pub dropped_invalid_comment: usize,
    pub dropped_missing_fields: usize,
    pub dropped_over_length: usize,
}

impl FilterStats {
    pub fn record_reject(&mut self, reason: RejectReason) {
        match reason {
            RejectReason::InvalidComment => self.dropped_invalid_comment += 1,
            RejectReason::MissingFields => self.dropped_missing_fields += 1,
            RejectReason::OverLength => self.dropped_over_length += 1,
        }
    }

    pub fn dropped(&self) -> usize {
        self.dropped_invalid_comment + self.dropped_missing_fields + self.dropped_over_length
    }

    pub fn total(&self) -> usize {
        self.kept + self.dropped()
    }
}

/// Result of a corpus build. When `aborted` is set, the backend failed
/// mid-run and `samples`/`stats` cover exactly the pairs processed before
/// the failure.
#[derive(Debug)]
pub struct CorpusBuild {
    pub samples: Vec<TrainingSample>,
    pub stats: FilterStats,
    pub aborted: Option<String>,
}

fn assemble(
    pseudo: &str,
    ground_truth: &str,
    rationale: Option<&Rationale>,
    mode: CorpusMode,
) -> TrainingSample {
    let input = match rationale {
        Some(r) => format!("{}\n{pseudo}", r.raw_comment),
        None => pseudo.to_string(),
    };
    let output = match (mode, rationale) {
        (CorpusMode::FullDistillation, Some(r)) => format!("{}\n{ground_truth}", r.raw_comment),
        _ => ground_truth.to_string(),
    };
    TrainingSample { instruction: REFINE_INSTRUCTION.to_string(), input, output, mode }
}

fn over_limit(sample: &TrainingSample, max_seq_tokens: usize) -> bool {
    let serialized = format!("{}\n{}\n{}", sample.instruction, sample.input, sample.output);
    lexical_token_count(&serialized) > max_seq_tokens
}

/// Build the corpus. Rationale generation fans out over the ambient worker
/// pool in bounded chunks; output order always follows input order. The
/// first backend failure stops the run after the pairs before it are
/// accounted for.
pub fn build_training_corpus(
    pairs: &[(String, String)],
    gen: &dyn ChatBackend,
    mode: CorpusMode,
    granularity: Granularity,
    limits: &Limits,
    templates: &PromptTemplates,
    workers: usize,
) -> Result<CorpusBuild> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut samples = Vec::new();
    let mut stats = FilterStats::default();
    let mut aborted = None;
    let mut processed = 0usize;

    let chunk_size = workers.max(1) * 4;
    'all: for chunk in pairs.chunks(chunk_size) {
        let rationales: Vec<Result<Option<Rationale>>> = chunk
            .par_iter()
            .map(|(pseudo, _)| match mode {
                CorpusMode::NoRationale => Ok(None),
                _ => generate_rationale(
                    pseudo,
                    gen,
                    granularity,
                    templates,
                    limits.max_rationale_tokens,
                )
                .map(Some),
            })
            .collect();
        for ((pseudo, ground_truth), outcome) in chunk.iter().zip(rationales) {
            let rationale = match outcome {
                Ok(r) => r,
                Err(Error::RationaleRejected { reason }) => {
                    processed += 1;
                    stats.record_reject(reason);
                    continue;
                }
                Err(e) => {
                    aborted = Some(e.to_string());
                    break 'all;
                }
            };
            processed += 1;
            let sample = assemble(pseudo, ground_truth, rationale.as_ref(), mode);
            if over_limit(&sample, limits.max_seq_tokens) {
                stats.record_reject(RejectReason::OverLength);
            } else {
                stats.kept += 1;
                samples.push(sample);
            }
        }
    }

    assert_eq!(stats.total(), processed, "filter accounting out of balance");
    assert_eq!(stats.kept, samples.len(), "kept count out of sync with samples");
    Ok(CorpusBuild { samples, stats, aborted })
}

/// Write corpus rows as JSONL and the filter stats as a JSON sidecar.
pub fn write_corpus(path: &Path, build: &CorpusBuild) -> Result<()> {
    let mut out = String::new();
    for sample in &build.samples {
        out.push_str(&serde_json::to_string(sample)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    let sidecar = path.with_extension("stats.json");
    std::fs::write(sidecar, serde_json::to_string_pretty(&build.stats)?)?;
    Ok(())
}

/// One annotated (or rejected) input function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub id: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub function_name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub purpose: Option<String>,
    #[serde(flatten)]
    pub detailed: Option<DetailedFields>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRun {
    pub rows: Vec<AnnotationRow>,
    pub stats: FilterStats,
    /// Inputs the backend could not answer; counted as rejections in the
    /// summary, not as run failures.
    pub backend_misses: usize,
}

/// Annotate a batch of `(id, pseudo_code)` functions. Unlike corpus
/// building, a per-input backend miss is recorded as a rejected row and the
/// run continues: annotation output mirrors its input line for line.
pub fn annotate_functions(
    inputs: &[(String, String)],
    gen: &dyn ChatBackend,
    granularity: Granularity,
    limits: &Limits,
    templates: &PromptTemplates,
    workers: usize,
) -> Result<AnnotationRun> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut rows = Vec::with_capacity(inputs.len());
    let mut stats = FilterStats::default();
    let mut backend_misses = 0usize;

    let chunk_size = workers.max(1) * 4;
    for chunk in inputs.chunks(chunk_size) {
        let outcomes: Vec<Result<Rationale>> = chunk
            .par_iter()
            .map(|(_, pseudo)| {
                generate_rationale(pseudo, gen, granularity, templates, limits.max_rationale_tokens)
            })
            .collect();
        for ((id, _), outcome) in chunk.iter().zip(outcomes) {
            let row = match outcome {
                Ok(r) => {
                    stats.kept += 1;
                    AnnotationRow {
                        id: id.clone(),
                        status: "ok".to_string(),
                        reason: None,
                        function_name: Some(r.function_name),
                        purpose: Some(r.purpose),
                        detailed: r.detailed_fields,
                        comment: Some(r.raw_comment),
                    }
                }
                Err(Error::RationaleRejected { reason }) => {
                    stats.record_reject(reason);
                    rejected_row(id, reason.to_string())
                }
                Err(Error::BackendUnavailable { .. }) => {
                    backend_misses += 1;
                    rejected_row(id, "backend_unavailable".to_string())
                }
                Err(e) => return Err(e),
            };
            rows.push(row);
        }
    }
    assert_eq!(stats.total() + backend_misses, inputs.len(), "annotation rows out of balance");
    Ok(AnnotationRun { rows, stats, backend_misses })
}

fn rejected_row(id: &str, reason: String) -> AnnotationRow {
    AnnotationRow {
        id: id.to_string(),
        status: "rejected".to_string(),
        reason: Some(reason),
        function_name: None,
        purpose: None,
        detailed: None,
        comment: None,
    }
}

/// Write annotation rows as JSONL, stats as a JSON sidecar.
pub fn write_annotations(path: &Path, run: &AnnotationRun) -> Result<()> {
    let mut out = String::new();
    for row in &run.rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    let summary = serde_json::json!({
        "kept": run.stats.kept,
        "dropped_invalid_comment": run.stats.dropped_invalid_comment,
        "dropped_missing_fields": run.stats.dropped_missing_fields,
        "dropped_over_length": run.stats.dropped_over_length,
        "backend_unavailable": run.backend_misses,
        "rejected": run.rows.len() - run.stats.kept,
    });
    std::fs::write(path.with_extension("stats.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{write_fixture, MockBackend};
    use crate::rationale::{build_rationale_prompt, compose_comment};
    use proptest::prelude::*;
    use tempfile::TempDir;

    fn pair(i: usize) -> (String, String) {
        (
            format!("undefined4 f{i}(void) {{ return {i}; }}"),
            format!("int f{i}(void) {{ return {i}; }}"),
        )
    }

    fn limits() -> Limits {
        Limits::default()
    }

    /// Stage fixtures: indexes in `bad` get prose, the rest valid comments.
    fn stage(dir: &Path, n: usize, bad: &[usize]) {
        let templates = PromptTemplates::default();
        for i in 0..n {
            let (pseudo, _) = pair(i);
            let prompt = build_rationale_prompt(&pseudo, Granularity::Concise, &templates);
            let reply = if bad.contains(&i) {
                "I could not produce a comment.".to_string()
            } else {
                compose_comment(&format!("f{i}"), &format!("returns {i}"), None)
            };
            write_fixture(dir, &prompt.user, &reply).unwrap();
        }
    }

    #[test]
    fn counts_balance_with_rejections() {
        let dir = TempDir::new().unwrap();
        stage(dir.path(), 10, &[3, 7]);
        let backend = MockBackend::new(dir.path()).unwrap();
        let pairs: Vec<_> = (0..10).map(pair).collect();
        let build = build_training_corpus(
            &pairs,
            &backend,
            CorpusMode::SourceOnly,
            Granularity::Concise,
            &limits(),
            &PromptTemplates::default(),
            2,
        )
        .unwrap();
        assert!(build.aborted.is_none());
        assert_eq!(build.stats.kept, 8);
        assert_eq!(build.stats.dropped_invalid_comment, 2);
        assert_eq!(build.stats.total(), 10);
        assert_eq!(build.samples.len(), 8);
    }

    #[test]
    fn annotation_keeps_rejects_and_misses_as_rows() {
        let dir = TempDir::new().unwrap();
        stage(dir.path(), 3, &[1]); // 0 and 2 valid, 1 prose; 3 has no fixture
        let backend = MockBackend::new(dir.path()).unwrap();
        let inputs: Vec<(String, String)> = (0..4).map(|i| (format!("in{i}"), pair(i).0)).collect();
        let run = annotate_functions(
            &inputs,
            &backend,
            Granularity::Concise,
            &limits(),
            &PromptTemplates::default(),
            2,
        )
        .unwrap();
        assert_eq!(run.rows.len(), 4);
        assert_eq!(run.stats.kept, 2);
        assert_eq!(run.stats.dropped_invalid_comment, 1);
        assert_eq!(run.backend_misses, 1);
        assert_eq!(run.rows[0].status, "ok");
        assert_eq!(run.rows[0].function_name.as_deref(), Some("f0"));
        assert_eq!(run.rows[1].status, "rejected");
        assert_eq!(run.rows[1].reason.as_deref(), Some("invalid_comment"));
        assert_eq!(run.rows[3].reason.as_deref(), Some("backend_unavailable"));

        let out = TempDir::new().unwrap();
        let path = out.path().join("rationales.jsonl");
        write_annotations(&path, &run).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        let stats: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(path.with_extension("stats.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(stats["rejected"], 2);
        assert_eq!(stats["backend_unavailable"], 1);
    }

    #[test]
    fn detailed_annotation_rows_carry_three_extra_fields() {
        let dir = TempDir::new().unwrap();
        let templates = PromptTemplates::default();
        let (pseudo, _) = pair(0);
        let prompt = build_rationale_prompt(&pseudo, Granularity::Detailed, &templates);
        let comment = compose_comment(
            "f0",
            "returns zero",
            Some(&crate::rationale::DetailedFields {
                inputs: "none".to_string(),
                outputs: "constant zero".to_string(),
                implicit_operations: "none".to_string(),
            }),
        );
        write_fixture(dir.path(), &prompt.user, &comment).unwrap();
        let backend = MockBackend::new(dir.path()).unwrap();
        let run = annotate_functions(
            &[("x".to_string(), pseudo)],
            &backend,
            Granularity::Detailed,
            &limits(),
            &templates,
            1,
        )
        .unwrap();
        let json = serde_json::to_value(&run.rows[0]).unwrap();
        assert_eq!(json["inputs"], "none");
        assert_eq!(json["outputs"], "constant zero");
        assert_eq!(json["implicit_operations"], "none");
    }

    #[test]
    fn source_only_orders_rationale_before_pseudo() {
        let dir = TempDir::new().unwrap();
        stage(dir.path(), 3, &[]);
        let backend = MockBackend::new(dir.path()).unwrap();
        let pairs: Vec<_> = (0..3).map(pair).collect();
        let build = build_training_corpus(
            &pairs,
            &backend,
            CorpusMode::SourceOnly,
            Granularity::Concise,
            &limits(),
            &PromptTemplates::default(),
            1,
        )
        .unwrap();
        for (sample, (pseudo, gt)) in build.samples.iter().zip(&pairs) {
            assert!(sample.input.starts_with("/*"));
            assert!(sample.input.ends_with(pseudo.as_str()));
            assert_eq!(&sample.output, gt);
            assert!(!sample.output.starts_with("/*"));
            assert_eq!(sample.instruction, REFINE_INSTRUCTION);
        }
    }

    #[test]
    fn distillation_outputs_start_with_rationale() {
        let dir = TempDir::new().unwrap();
        stage(dir.path(), 2, &[]);
        let backend = MockBackend::new(dir.path()).unwrap();
        let pairs: Vec<_> = (0..2).map(pair).collect();
        let build = build_training_corpus(
            &pairs,
            &backend,
            CorpusMode::FullDistillation,
            Granularity::Concise,
            &limits(),
            &PromptTemplates::default(),
            1,
        )
        .unwrap();
        for (sample, (_, gt)) in build.samples.iter().zip(&pairs) {
            assert!(sample.output.starts_with("/*"));
            assert!(sample.output.ends_with(gt.as_str()));
        }
    }

    #[test]
    fn no_rationale_mode_needs_no_backend() {
        // empty fixture dir: any generator call would fail
        let dir = TempDir::new().unwrap();
        let backend = MockBackend::new(dir.path()).unwrap();
        let pairs: Vec<_> = (0..4).map(pair).collect();
        let build = build_training_corpus(
            &pairs,
            &backend,
            CorpusMode::NoRationale,
            Granularity::Concise,
            &limits(),
            &PromptTemplates::default(),
            2,
        )
        .unwrap();
        assert!(build.aborted.is_none());
        assert_eq!(build.stats.kept, 4);
        for (sample, (pseudo, _)) in build.samples.iter().zip(&pairs) {
            assert_eq!(&sample.input, pseudo);
        }
    }

    #[test]
    fn oversized_samples_are_dropped_by_length() {
        let dir = TempDir::new().unwrap();
        stage(dir.path(), 3, &[]);
        let backend = MockBackend::new(dir.path()).unwrap();
        let pairs: Vec<_> = (0..3).map(pair).collect();
        let tight = Limits { max_rationale_tokens: 256, max_seq_tokens: 10 };
        let build = build_training_corpus(
            &pairs,
            &backend,
            CorpusMode::SourceOnly,
            Granularity::Concise,
            &tight,
            &PromptTemplates::default(),
            1,
        )
        .unwrap();
        assert_eq!(build.stats.kept, 0);
        assert_eq!(build.stats.dropped_over_length, 3);
        assert_eq!(build.stats.total(), 3);
    }

    #[test]
    fn backend_failure_aborts_with_partial_stats() {
        let dir = TempDir::new().unwrap();
        // fixture for pair 2 deliberately absent
        let templates = PromptTemplates::default();
        for i in [0usize, 1] {
            let (pseudo, _) = pair(i);
            let prompt = build_rationale_prompt(&pseudo, Granularity::Concise, &templates);
            write_fixture(dir.path(), &prompt.user, &compose_comment(&format!("f{i}"), "x", None))
                .unwrap();
        }
        let backend = MockBackend::new(dir.path()).unwrap();
        let pairs: Vec<_> = (0..4).map(pair).collect();
        let build = build_training_corpus(
            &pairs,
            &backend,
            CorpusMode::SourceOnly,
            Granularity::Concise,
            &limits(),
            &templates,
            1,
        )
        .unwrap();
        assert!(build.aborted.is_some(), "missing fixture should abort the build");
        assert_eq!(build.stats.kept, 2);
        assert_eq!(build.stats.total(), 2);
    }

    #[test]
    fn empty_pairs_is_an_error() {
        let dir = TempDir::new().unwrap();
        let backend = MockBackend::new(dir.path()).unwrap();
        assert!(matches!(
            build_training_corpus(
                &[],
                &backend,
                CorpusMode::SourceOnly,
                Granularity::Concise,
                &limits(),
                &PromptTemplates::default(),
                1,
            ),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn corpus_file_round_trips_three_fields() {
        let dir = TempDir::new().unwrap();
        stage(dir.path(), 2, &[]);
        let backend = MockBackend::new(dir.path()).unwrap();
        let pairs: Vec<_> = (0..2).map(pair).collect();
        let build = build_training_corpus(
            &pairs,
            &backend,
            CorpusMode::SourceOnly,
            Granularity::Concise,
            &limits(),
            &PromptTemplates::default(),
            1,
        )
        .unwrap();
        let out = dir.path().join("corpus.jsonl");
        write_corpus(&out, &build).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        for line in text.lines() {
            let value: serde_json::Value = serde_json::from_str(line).unwrap();
            let obj = value.as_object().unwrap();
            assert_eq!(obj.len(), 3);
            for key in ["instruction", "input", "output"] {
                assert!(obj.contains_key(key));
            }
        }
        assert!(out.with_extension("stats.json").exists());
    }

    /// Backend whose behavior per pair index follows a scripted pattern.
    struct PatternBackend {
        behaviors: Vec<u8>,
    }

    impl ChatBackend for PatternBackend {
        fn complete(
            &self,
            request: &crate::backend::CompletionRequest,
        ) -> Result<crate::backend::Completion> {
            let tail =
                request.user.split("undefined4 f").nth(1).expect("prompt embeds the pseudo-code");
            let index: usize =
                tail.chars().take_while(char::is_ascii_digit).collect::<String>().parse().unwrap();
            let text = match self.behaviors[index] {
                0 => compose_comment(&format!("f{index}"), "ok", None),
                1 => "no comment here".to_string(),
                2 => compose_comment(&format!("f{index}"), "p", None).replace(" */", "\n */"),
                _ => compose_comment(&format!("f{index}"), &"long ".repeat(300), None),
            };
            Ok(crate::backend::Completion { text })
        }
    }

    proptest! {
        #[test]
        fn stats_balance_under_random_rejection_patterns(
            behaviors in proptest::collection::vec(0u8..4, 1..24),
            workers in 1usize..4,
        ) {
            let backend = PatternBackend { behaviors: behaviors.clone() };
            let pairs: Vec<_> = (0..behaviors.len()).map(pair).collect();
            let build = build_training_corpus(
                &pairs,
                &backend,
                CorpusMode::SourceOnly,
                Granularity::Concise,
                &limits(),
                &PromptTemplates::default(),
                workers,
            )
            .unwrap();
            prop_assert!(build.aborted.is_none());
            prop_assert_eq!(build.stats.total(), behaviors.len());
            let valid = behaviors.iter().filter(|b| **b == 0 || **b == 2).count();
            prop_assert_eq!(build.stats.kept, valid);
            let overlong = behaviors.iter().filter(|b| **b == 3).count();
            prop_assert_eq!(build.stats.dropped_over_length, overlong);
            prop_assert_eq!(build.stats.dropped_invalid_comment, behaviors.len() - valid - overlong);
        }
    }
}
