//! Benchmark evaluation: drive the per-sample pipeline over a worker pool,
//! execute chosen candidates against their test harnesses, and emit the
//! level-by-level report.
//!
//! Guarantees: one record per evaluated sample (errors become error rows,
//! never silent skips); records sorted by sample id; `re_exec_pass` implies
//! `compile_ok`; the report is a pure function of the records, and the CSV
//! carries the same numbers as the text.

use crate::backend::{sha256_hex, ChatBackend};
use crate::config::AppConfig;
use crate::corpus::{BenchmarkSample, OptLevel};
use crate::dualpath::{run_ddpf, Candidate, DdpfOutcome, PathKind, SelectionBranch};
use crate::error::{Error, RejectReason, Result};
use crate::metric::{re_exec_rate, round2, source_bleu4};
use crate::toolchain::{ExecStatus, Toolchain};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

/// Which candidate the evaluation executes: the selector's choice, or one
/// path forced for ablations. Candidates are produced the same way in all
/// three modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathMode {
    Ddpf,
    Sem,
    Syn,
}

impl FromStr for PathMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpf" => Ok(PathMode::Ddpf),
            "sem" => Ok(PathMode::Sem),
            "syn" => Ok(PathMode::Syn),
            other => Err(Error::InvalidConfig { detail: format!("unknown path mode {other:?}") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: String,
    pub opt_level: OptLevel,
    /// `None` only for error rows where no candidate was produced.
    pub selected_path: Option<PathKind>,
    pub branch: Option<SelectionBranch>,
    pub compile_ok: bool,
    pub re_exec_pass: bool,
    pub exec_status: Option<String>,
    pub source_bleu4: Option<f64>,
    pub consistency: f64,
    pub wall_time_ms: u64,
    pub error_class: Option<String>,
    pub error_detail: Option<String>,
}

impl EvalRecord {
    /// The record as JSON with timing removed: equal across replayed runs.
    pub fn comparable_payload(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("record serializes");
        value.as_object_mut().expect("record is an object").remove("wall_time_ms");
        value
    }
}

/// Per-candidate slice of the decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateLog {
    pub path: PathKind,
    pub source: String,
    pub compile_ok: bool,
    pub consistency: f64,
    pub diagnostics_digest: String,
    pub diagnostics_excerpt: String,
}

impl From<&Candidate> for CandidateLog {
    fn from(c: &Candidate) -> Self {
        Self {
            path: c.path,
            source: c.source.clone(),
            compile_ok: c.compile_ok,
            consistency: c.consistency,
            diagnostics_digest: sha256_hex(c.diagnostics.as_bytes()),
            diagnostics_excerpt: c.diagnostics.chars().take(400).collect(),
        }
    }
}

/// One line of `decisions.jsonl`: everything needed to re-run selection
/// offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub sample_id: String,
    pub opt_level: OptLevel,
    pub branch: SelectionBranch,
    pub chosen_path: PathKind,
    pub sem: CandidateLog,
    pub syn: CandidateLog,
    pub sem_score: Option<f64>,
    pub syn_score: Option<f64>,
    pub rationale_rejected: Option<RejectReason>,
}

#[derive(Debug)]
pub struct EvalRun {
    pub records: Vec<EvalRecord>,
    pub decisions: Vec<DecisionRow>,
}

fn error_class_for(status: ExecStatus) -> Option<&'static str> {
    match status {
        ExecStatus::Pass => None,
        ExecStatus::BuildFailed => Some("build_failed"),
        ExecStatus::WrongOutput { .. } => Some("wrong_output"),
        ExecStatus::Crash { .. } => Some("crash"),
        ExecStatus::Timeout => Some("timeout"),
    }
}

fn evaluate_one(
    sample: &BenchmarkSample,
    gen: &dyn ChatBackend,
    refiner: &dyn ChatBackend,
    toolchain: &Toolchain,
    config: &AppConfig,
    mode: PathMode,
) -> Result<(EvalRecord, Option<DecisionRow>)> {
    let started = Instant::now();
    let outcome: DdpfOutcome = match run_ddpf(
        sample,
        gen,
        refiner,
        toolchain,
        &config.bleu,
        &config.prompt_templates,
        &config.limits,
        config.run.granularity,
    ) {
        Ok(outcome) => outcome,
        Err(Error::BackendUnavailable { detail }) => {
            let record = EvalRecord {
                sample_id: sample.id.clone(),
                opt_level: sample.opt_level,
                selected_path: None,
                branch: None,
                compile_ok: false,
                re_exec_pass: false,
                exec_status: None,
                source_bleu4: None,
                consistency: 0.0,
                wall_time_ms: started.elapsed().as_millis() as u64,
                error_class: Some("backend_unavailable".to_string()),
                error_detail: Some(detail),
            };
            return Ok((record, None));
        }
        Err(e) => return Err(e),
    };

    let chosen: &Candidate = match mode {
        PathMode::Ddpf => &outcome.decision.chosen,
        PathMode::Sem => &outcome.sem,
        PathMode::Syn => &outcome.syn,
    };
    let (re_exec_pass, exec_status) = if chosen.compile_ok {
        let report =
            toolchain.run_unit_tests(&chosen.source, &sample.test_harness, sample.opt_level)?;
        (report.passed(), report.status)
    } else {
        (false, ExecStatus::BuildFailed)
    };
    let source_bleu =
        (!chosen.source.is_empty()).then(|| source_bleu4(&chosen.source, &sample.ground_truth));

    let record = EvalRecord {
        sample_id: sample.id.clone(),
        opt_level: sample.opt_level,
        selected_path: Some(chosen.path),
        branch: Some(outcome.decision.branch),
        compile_ok: chosen.compile_ok,
        re_exec_pass,
        exec_status: Some(exec_status.label()),
        source_bleu4: source_bleu,
        consistency: chosen.consistency,
        wall_time_ms: started.elapsed().as_millis() as u64,
        error_class: error_class_for(exec_status).map(str::to_string),
        error_detail: None,
    };
    let decision = DecisionRow {
        sample_id: sample.id.clone(),
        opt_level: sample.opt_level,
        branch: outcome.decision.branch,
        chosen_path: outcome.decision.chosen.path,
        sem: CandidateLog::from(&outcome.sem),
        syn: CandidateLog::from(&outcome.syn),
        sem_score: outcome.decision.sem_score,
        syn_score: outcome.decision.syn_score,
        rationale_rejected: outcome.rationale_rejected,
    };
    Ok((record, Some(decision)))
}

/// Evaluate every sample at the configured levels. Exactly one record per
/// sample comes back; per-sample backend outages become error rows, while
/// environment failures (missing tools, I/O) abort the run.
pub fn evaluate_benchmark(
    samples: &[BenchmarkSample],
    gen: &dyn ChatBackend,
    refiner: &dyn ChatBackend,
    toolchain: &Toolchain,
    config: &AppConfig,
    mode: PathMode,
) -> Result<EvalRun> {
    let selected: Vec<&BenchmarkSample> =
        samples.iter().filter(|s| config.run.opt_levels.contains(&s.opt_level)).collect();
    if selected.is_empty() {
        return Err(Error::EmptyInput);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.run.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig { detail: e.to_string() })?;
    let mut rows: Vec<(EvalRecord, Option<DecisionRow>)> = pool.install(|| {
        selected
            .par_iter()
            .map(|sample| evaluate_one(sample, gen, refiner, toolchain, config, mode))
            .collect::<Result<Vec<_>>>()
    })?;
    if config.run.seed_ordering {
        rows.sort_by(|a, b| a.0.sample_id.cmp(&b.0.sample_id));
    }
    let mut records = Vec::with_capacity(rows.len());
    let mut decisions = Vec::new();
    for (record, decision) in rows {
        records.push(record);
        decisions.extend(decision);
    }
    assert_eq!(records.len(), selected.len(), "lost or duplicated records");
    for record in &records {
        assert!(!record.re_exec_pass || record.compile_ok, "pass without compile");
    }
    Ok(EvalRun { records, decisions })
}

#[derive(Debug, Clone, Default, PartialEq)]
struct LevelAgg {
    n: usize,
    passes: usize,
    compiles: usize,
    bleu_sum: f64,
    bleu_n: usize,
}

impl LevelAgg {
    fn re_exec(&self) -> f64 {
        re_exec_rate(self.passes, self.n)
    }

    fn compile(&self) -> f64 {
        re_exec_rate(self.compiles, self.n)
    }

    fn mean_bleu(&self) -> Option<f64> {
        (self.bleu_n > 0).then(|| self.bleu_sum / self.bleu_n as f64)
    }
}

fn fmt_opt_bleu(b: Option<f64>) -> String {
    match b {
        Some(v) => format!("{v:.4}"),
        None => "-".to_string(),
    }
}

/// Rendered evaluation summary. `text` and `csv` express the same
/// aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    pub csv: String,
}

/// Aggregate records into the level table (re-exec %, compile %, mean
/// source BLEU-4), the average row (arithmetic mean of the unrounded level
/// rates), path-selection shares, and the selection-branch histogram.
pub fn emit_report(records: &[EvalRecord]) -> Result<Report> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut levels: BTreeMap<OptLevel, LevelAgg> = BTreeMap::new();
    for r in records {
        let agg = levels.entry(r.opt_level).or_default();
        agg.n += 1;
        agg.passes += r.re_exec_pass as usize;
        agg.compiles += r.compile_ok as usize;
        if let Some(b) = r.source_bleu4 {
            agg.bleu_sum += b;
            agg.bleu_n += 1;
        }
    }

    let avg_re_exec = levels.values().map(LevelAgg::re_exec).sum::<f64>() / levels.len() as f64;
    let avg_compile = levels.values().map(LevelAgg::compile).sum::<f64>() / levels.len() as f64;
    let level_bleus: Vec<f64> = levels.values().filter_map(LevelAgg::mean_bleu).collect();
    let avg_bleu = (!level_bleus.is_empty())
        .then(|| level_bleus.iter().sum::<f64>() / level_bleus.len() as f64);

    let mut path_counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut branch_counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        let key = match r.selected_path {
            Some(PathKind::Semantic) => "semantic",
            Some(PathKind::Syntactic) => "syntactic",
            None => "none",
        };
        *path_counts.entry(key).or_default() += 1;
        if let Some(branch) = r.branch {
            *branch_counts.entry(branch.to_string()).or_default() += 1;
        }
    }
    let total = records.len();

    let mut text = String::new();
    let mut csv = String::new();
    csv.push_str("kind,key,n,re_exec_pct,compile_pct,mean_source_bleu4\n");
    text.push_str("re-executability by optimization level\n");
    text.push_str("  level     n   re-exec%   compile%   src-bleu4\n");
    for (level, agg) in &levels {
        let re = round2(agg.re_exec() * 100.0);
        let co = round2(agg.compile() * 100.0);
        let bl = fmt_opt_bleu(agg.mean_bleu());
        text.push_str(&format!(
            "  {:<6} {:>4}   {:>8.2}   {:>8.2}   {:>9}\n",
            level.to_string(),
            agg.n,
            re,
            co,
            bl
        ));
        csv.push_str(&format!("level,{level},{},{re:.2},{co:.2},{bl}\n", agg.n));
    }
    let avg_re = round2(avg_re_exec * 100.0);
    let avg_co = round2(avg_compile * 100.0);
    let avg_bl = fmt_opt_bleu(avg_bleu);
    text.push_str(&format!(
        "  {:<6} {:>4}   {:>8.2}   {:>8.2}   {:>9}\n",
        "Avg", total, avg_re, avg_co, avg_bl
    ));
    csv.push_str(&format!("avg,all,{total},{avg_re:.2},{avg_co:.2},{avg_bl}\n"));

    text.push_str("\npath selection\n");
    for key in ["semantic", "syntactic", "none"] {
        let n = path_counts.get(key).copied().unwrap_or(0);
        let pct = round2(n as f64 / total as f64 * 100.0);
        text.push_str(&format!("  {key:<10} {n:>4} ({pct:.2}%)\n"));
        csv.push_str(&format!("path_share,{key},{n},{pct:.2},,\n"));
    }

    text.push_str("\nselection branches\n");
    for (branch, n) in &branch_counts {
        text.push_str(&format!("  {branch:<24} {n:>4}\n"));
        csv.push_str(&format!("branch,{branch},{n},,,\n"));
    }

    Ok(Report { text, csv })
}

/// Load an evaluation record file (JSONL, one record per line).
pub fn load_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: EvalRecord = serde_json::from_str(line)
            .map_err(|e| Error::Parse { line: idx + 1, detail: e.to_string() })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(records)
}

/// Write `records.jsonl`, `decisions.jsonl`, `report.txt` and `report.csv`.
pub fn write_run_outputs(run: &EvalRun, dir: &Path) -> Result<Report> {
    std::fs::create_dir_all(dir)?;
    let mut records = String::new();
    for r in &run.records {
        records.push_str(&serde_json::to_string(r)?);
        records.push('\n');
    }
    std::fs::write(dir.join("records.jsonl"), records)?;
    let mut decisions = String::new();
    for d in &run.decisions {
        decisions.push_str(&serde_json::to_string(d)?);
        decisions.push('\n');
    }
    std::fs::write(dir.join("decisions.jsonl"), decisions)?;
    let report = emit_report(&run.records)?;
    std::fs::write(dir.join("report.txt"), &report.text)?;
    std::fs::write(dir.join("report.csv"), &report.csv)?;
    Ok(report)
}
