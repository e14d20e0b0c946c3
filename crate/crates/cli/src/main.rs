//! `refit`: the pipeline as subcommands.
//!
//! Exit codes are a contract: 0 = run completed (candidate quality is data,
//! not failure), 1 = infrastructure problem (missing tools, unreadable
//! inputs, backend outage mid-corpus), 2 = usage error (bad flag values or
//! config). Every command writes a manifest capturing the effective config
//! digest, toolchain versions, and input/fixture digests, so a mock-backed
//! run can be reproduced from the artifacts alone.

use clap::{Parser, Subcommand};
use refit_core::analysis::{
    failure_by_pattern, length_curve_csv, patterns_csv, rate_by_length, DEFAULT_LENGTH_EDGES,
};
use refit_core::backend::{make_backend, sha256_hex, BackendConfig};
use refit_core::config::AppConfig;
use refit_core::corpus::{load_samples, OptLevel};
use refit_core::error::{Error, Result};
use refit_core::fixtures::write_mini_benchmark;
use refit_core::harness::{evaluate_benchmark, load_records, write_run_outputs, PathMode};
use refit_core::toolchain::{Toolchain, ToolchainInfo};
use refit_core::training::{
    annotate_functions, build_training_corpus, write_annotations, write_corpus, CorpusMode,
};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "refit", version, about = "Refine decompiler pseudo-code into re-executable C")]
struct Cli {
    /// TOML configuration file; built-in defaults apply when omitted
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate validated header-comment rationales for decompiled functions
    Annotate {
        /// JSONL input; rows need "pseudo_code" (and optionally "id")
        input: PathBuf,
        /// concise | detailed (default from config)
        #[arg(long)]
        granularity: Option<String>,
        /// Output JSONL path; a .stats.json sidecar is written next to it
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Build an instruction-tuning corpus from (pseudo, source) pairs
    BuildDataset {
        /// JSONL input; rows need "pseudo_code" and "ground_truth"
        pairs: PathBuf,
        /// source_only | full_distillation | no_rationale
        #[arg(long, default_value = "source_only")]
        mode: String,
        #[arg(long)]
        granularity: Option<String>,
        /// Output JSONL path; a .stats.json sidecar is written next to it
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Refine, verify, and select candidates for every benchmark sample
    Evaluate {
        /// Benchmark samples (JSONL)
        samples: PathBuf,
        /// Which candidate to execute: ddpf (selector), sem, or syn
        #[arg(long, default_value = "ddpf")]
        path: String,
        /// Comma-separated subset of O0,O1,O2,O3
        #[arg(long)]
        levels: Option<String>,
        /// Output directory (default from config)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Per-binary execution timeout in seconds
        #[arg(long)]
        timeout: Option<u64>,
    },
    /// Attribute re-execution failures to code patterns and input length
    Analyze {
        /// records.jsonl from an evaluation run
        records: PathBuf,
        /// The samples the records were produced from
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated length-bucket edges in lexical tokens
        #[arg(long)]
        edges: Option<String>,
    },
    /// Write the offline demo benchmark with replayable model fixtures
    GenFixtures {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let (config, config_path) = match &cli.config {
        Some(path) => (AppConfig::load(path)?, Some(path.clone())),
        None => (AppConfig::default(), None),
    };
    let config_path = config_path.as_deref();
    match cli.command {
        Command::Annotate { input, granularity, out, workers } => {
            cmd_annotate(&config, config_path, &input, granularity.as_deref(), &out, workers)
        }
        Command::BuildDataset { pairs, mode, granularity, out, workers } => cmd_build_dataset(
            &config,
            config_path,
            &pairs,
            &mode,
            granularity.as_deref(),
            &out,
            workers,
        ),
        Command::Evaluate { samples, path, levels, out, workers, timeout } => cmd_evaluate(
            &config,
            config_path,
            &samples,
            &path,
            levels.as_deref(),
            out,
            workers,
            timeout,
        ),
        Command::Analyze { records, samples, out, edges } => {
            cmd_analyze(&config, config_path, &records, &samples, &out, edges.as_deref())
        }
        Command::GenFixtures { out } => cmd_gen_fixtures(&config, &out),
    }
}

#[derive(Deserialize)]
struct PseudoRow {
    #[serde(default)]
    id: Option<String>,
    pseudo_code: String,
}

#[derive(Deserialize)]
struct PairRow {
    pseudo_code: String,
    ground_truth: String,
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(line)
                .map_err(|e| Error::Parse { line: idx + 1, detail: e.to_string() })?,
        );
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(rows)
}

fn parse_levels(spec: &str) -> Result<Vec<OptLevel>> {
    spec.split(',').map(|t| t.trim().parse::<OptLevel>()).collect()
}

fn parse_edges(spec: &str) -> Result<Vec<usize>> {
    spec.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| Error::InvalidConfig { detail: format!("bad edge {t:?}: {e}") })
        })
        .collect()
}

fn parse_granularity(
    flag: Option<&str>,
    config: &AppConfig,
) -> Result<refit_core::rationale::Granularity> {
    match flag {
        Some(g) => g.parse(),
        None => Ok(config.run.granularity),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

fn digest_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Content digest of a fixture directory: file names and their hashes,
/// order-independent.
fn digest_dir(dir: &Path) -> Result<String> {
    let mut entries: Vec<(String, String)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if entry.path().is_file() {
            entries.push((
                entry.file_name().to_string_lossy().into_owned(),
                digest_file(&entry.path())?,
            ));
        }
    }
    entries.sort();
    let listing: String = entries.iter().map(|(n, d)| format!("{n}:{d}\n")).collect();
    Ok(sha256_hex(listing.as_bytes()))
}

fn fixture_entry(backend: &BackendConfig) -> Result<serde_json::Value> {
    match &backend.fixture_dir {
        Some(dir) => Ok(serde_json::json!({ "path": dir, "sha256": digest_dir(dir)? })),
        None => Ok(serde_json::Value::Null),
    }
}

fn write_manifest(
    path: &Path,
    command: &str,
    config: &AppConfig,
    config_path: Option<&Path>,
    toolchain: Option<&ToolchainInfo>,
    inputs: &[(&str, &Path)],
) -> Result<()> {
    let mut input_map = serde_json::Map::new();
    for (name, input) in inputs {
        input_map.insert(
            name.to_string(),
            serde_json::json!({ "path": input, "sha256": digest_file(input)? }),
        );
    }
    let manifest = serde_json::json!({
        "command": command,
        "config_digest": config.digest()?,
        "config_path": config_path,
        "toolchain": toolchain,
        "inputs": input_map,
        "fixtures": {
            "generator": fixture_entry(&config.generator)?,
            "refiner": fixture_entry(&config.refiner)?,
        },
    });
    ensure_parent(path)?;
    std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn manifest_sibling(out_file: &Path) -> PathBuf {
    out_file.with_extension("manifest.json")
}

fn cmd_annotate(
    config: &AppConfig,
    config_path: Option<&Path>,
    input: &Path,
    granularity: Option<&str>,
    out: &Path,
    workers: Option<usize>,
) -> Result<()> {
    let granularity = parse_granularity(granularity, config)?;
    let rows: Vec<PseudoRow> = read_jsonl(input)?;
    let inputs: Vec<(String, String)> = rows
        .into_iter()
        .enumerate()
        .map(|(i, row)| (row.id.unwrap_or_else(|| format!("row{i}")), row.pseudo_code))
        .collect();
    let gen = make_backend(&config.generator)?;
    let run = annotate_functions(
        &inputs,
        gen.as_ref(),
        granularity,
        &config.limits,
        &config.prompt_templates,
        workers.unwrap_or(config.run.workers),
    )?;
    ensure_parent(out)?;
    write_annotations(out, &run)?;
    write_manifest(
        &manifest_sibling(out),
        "annotate",
        config,
        config_path,
        None,
        &[("input", input)],
    )?;
    println!(
        "annotated {} functions: {} kept, {} rejected ({} backend_unavailable)",
        run.rows.len(),
        run.stats.kept,
        run.rows.len() - run.stats.kept,
        run.backend_misses
    );
    Ok(())
}

fn cmd_build_dataset(
    config: &AppConfig,
    config_path: Option<&Path>,
    pairs: &Path,
    mode: &str,
    granularity: Option<&str>,
    out: &Path,
    workers: Option<usize>,
) -> Result<()> {
    let mode: CorpusMode = mode.parse()?;
    let granularity = parse_granularity(granularity, config)?;
    let rows: Vec<PairRow> = read_jsonl(pairs)?;
    let pair_list: Vec<(String, String)> =
        rows.into_iter().map(|r| (r.pseudo_code, r.ground_truth)).collect();
    let gen = make_backend(&config.generator)?;
    let build = build_training_corpus(
        &pair_list,
        gen.as_ref(),
        mode,
        granularity,
        &config.limits,
        &config.prompt_templates,
        workers.unwrap_or(config.run.workers),
    )?;
    ensure_parent(out)?;
    write_corpus(out, &build)?;
    write_manifest(
        &manifest_sibling(out),
        "build-dataset",
        config,
        config_path,
        None,
        &[("pairs", pairs)],
    )?;
    println!(
        "corpus: {} kept, {} dropped of {} processed",
        build.stats.kept,
        build.stats.total() - build.stats.kept,
        build.stats.total()
    );
    if let Some(detail) = build.aborted {
        return Err(Error::BackendUnavailable {
            detail: format!("aborted after flushing partial corpus: {detail}"),
        });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    config: &AppConfig,
    config_path: Option<&Path>,
    samples_path: &Path,
    path: &str,
    levels: Option<&str>,
    out: Option<PathBuf>,
    workers: Option<usize>,
    timeout: Option<u64>,
) -> Result<()> {
    let mode: PathMode = path.parse()?;
    let mut config = config.clone();
    if let Some(levels) = levels {
        config.run.opt_levels = parse_levels(levels)?;
    }
    if let Some(workers) = workers {
        config.run.workers = workers;
    }
    if let Some(secs) = timeout {
        config.run.exec_timeout_ms = secs.saturating_mul(1000);
    }
    if let Some(out) = out {
        config.run.output_dir = out;
    }
    config.validate()?;
    let mut toolchain_config = config.toolchain.clone();
    toolchain_config.exec_timeout_ms = config.run.exec_timeout_ms;
    let toolchain = Toolchain::new(toolchain_config);
    let info = toolchain.probe()?;
    let samples = load_samples(samples_path)?;
    let gen = make_backend(&config.generator)?;
    let refiner = make_backend(&config.refiner)?;
    let run =
        evaluate_benchmark(&samples, gen.as_ref(), refiner.as_ref(), &toolchain, &config, mode)?;
    let report = write_run_outputs(&run, &config.run.output_dir)?;
    write_manifest(
        &config.run.output_dir.join("manifest.json"),
        "evaluate",
        &config,
        config_path,
        Some(&info),
        &[("samples", samples_path)],
    )?;
    print!("{}", report.text);
    println!("\nartifacts in {}", config.run.output_dir.display());
    Ok(())
}

fn cmd_analyze(
    config: &AppConfig,
    config_path: Option<&Path>,
    records_path: &Path,
    samples_path: &Path,
    out: &Path,
    edges: Option<&str>,
) -> Result<()> {
    let records = load_records(records_path)?;
    let samples = load_samples(samples_path)?;
    let edges = match edges {
        Some(spec) => parse_edges(spec)?,
        None => DEFAULT_LENGTH_EDGES.to_vec(),
    };
    let patterns = failure_by_pattern(&records, &samples)?;
    let lengths = rate_by_length(&records, &samples, &edges)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("patterns.csv"), patterns_csv(&patterns))?;
    std::fs::write(out.join("length_curve.csv"), length_curve_csv(&lengths))?;
    write_manifest(
        &out.join("manifest.json"),
        "analyze",
        config,
        config_path,
        None,
        &[("records", records_path), ("samples", samples_path)],
    )?;
    println!(
        "wrote {} pattern rows and {} length buckets to {}",
        patterns.len(),
        lengths.len(),
        out.display()
    );
    Ok(())
}

fn cmd_gen_fixtures(config: &AppConfig, out: &Path) -> Result<()> {
    let toolchain = Toolchain::new(config.toolchain.clone());
    let info = toolchain.probe()?;
    let bench = write_mini_benchmark(out, &toolchain)?;
    let generated = AppConfig::load(&bench.config_path)?;
    write_manifest(
        &bench.root.join("manifest.json"),
        "gen-fixtures",
        &generated,
        Some(&bench.config_path),
        Some(&info),
        &[("samples", &bench.samples_path)],
    )?;
    println!("demo benchmark written to {}", bench.root.display());
    println!(
        "next: refit --config {} evaluate {} --out {}",
        bench.config_path.display(),
        bench.samples_path.display(),
        bench.root.join("eval-out").display()
    );
    Ok(())
}
