//! End-to-end runs of the `refit` binary against the generated offline
//! benchmark. Each test drives real process invocations; the model side is
//! the fixture-backed mock, the compiler side is the real toolchain.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn refit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_refit"))
}

fn run(args: &[&str]) -> Output {
    refit().args(args).output().expect("spawn refit")
}

fn assert_status(out: &Output, want: i32) {
    let got = out.status.code().expect("exit code");
    assert_eq!(
        got,
        want,
        "exit {got}, wanted {want}\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct Bench {
    _dir: TempDir,
    root: PathBuf,
}

impl Bench {
    fn generate() -> Self {
        let dir = TempDir::new().unwrap();
        let root = dir.path().join("bench");
        let out = run(&["gen-fixtures", "--out", root.to_str().unwrap()]);
        assert_status(&out, 0);
        Self { _dir: dir, root }
    }

    fn config(&self) -> String {
        self.root.join("config.toml").to_str().unwrap().to_string()
    }

    fn samples(&self) -> String {
        self.root.join("samples.jsonl").to_str().unwrap().to_string()
    }

    fn evaluate(&self, extra: &[&str]) -> (PathBuf, Output) {
        let out_dir = self.root.join(format!("out-{}", extra.join("_").replace('/', "-")));
        let mut args = vec![
            "--config".to_string(),
            self.config(),
            "evaluate".to_string(),
            self.samples(),
            "--out".to_string(),
            out_dir.to_str().unwrap().to_string(),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        let out = refit().args(&args).output().expect("spawn refit");
        (out_dir, out)
    }
}

fn read_jsonl(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn gen_fixtures_writes_a_complete_benchmark() {
    let bench = Bench::generate();
    for name in ["config.toml", "samples.jsonl", "manifest.json"] {
        assert!(bench.root.join(name).is_file(), "missing {name}");
    }
    for dir in ["generator-fixtures", "refiner-fixtures"] {
        assert!(bench.root.join(dir).is_dir(), "missing {dir}");
    }
    assert_eq!(read_jsonl(&bench.root.join("samples.jsonl")).len(), 32);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(bench.root.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "gen-fixtures");
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);
    assert!(manifest["toolchain"]["cc_version"].is_string());
    assert!(manifest["fixtures"]["generator"]["sha256"].is_string());
}

#[test]
fn evaluate_single_level_completes_and_reports() {
    let bench = Bench::generate();
    let (out_dir, out) = bench.evaluate(&["--levels", "O0"]);
    assert_status(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("Avg"), "report missing Avg row:\n{text}");
    let records = read_jsonl(&out_dir.join("records.jsonl"));
    assert_eq!(records.len(), 8);
    assert!(records.iter().all(|r| r["opt_level"] == "O0"));
    for name in ["records.jsonl", "decisions.jsonl", "report.txt", "report.csv", "manifest.json"] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);
    assert!(manifest["inputs"]["samples"]["sha256"].is_string());
}

#[test]
fn evaluate_exit_zero_even_when_candidates_fail() {
    // syn-only forces the weakest path; most candidates fail, the run still
    // completes.
    let bench = Bench::generate();
    let (out_dir, out) = bench.evaluate(&["--path", "syn", "--levels", "O0"]);
    assert_status(&out, 0);
    let records = read_jsonl(&out_dir.join("records.jsonl"));
    let passes = records.iter().filter(|r| r["re_exec_pass"] == true).count();
    assert_eq!(records.len(), 8);
    assert_eq!(passes, 1, "syn-only should pass exactly gcd at one level");
}

#[test]
fn selector_dominates_both_forced_paths() {
    let bench = Bench::generate();
    let pass_rate = |extra: &[&str]| {
        let (out_dir, out) = bench.evaluate(extra);
        assert_status(&out, 0);
        let records = read_jsonl(&out_dir.join("records.jsonl"));
        let passes = records.iter().filter(|r| r["re_exec_pass"] == true).count();
        (passes, records.len())
    };
    let (ddpf, n) = pass_rate(&[]);
    let (sem, _) = pass_rate(&["--path", "sem"]);
    let (syn, _) = pass_rate(&["--path", "syn"]);
    assert_eq!(n, 32);
    assert_eq!(ddpf, 28);
    assert_eq!(sem, 24);
    assert_eq!(syn, 4);
    assert!(ddpf >= sem.max(syn));
}

#[test]
fn unknown_level_is_a_usage_error() {
    let bench = Bench::generate();
    let (_, out) = bench.evaluate(&["--levels", "O9"]);
    assert_status(&out, 2);
    assert!(stderr(&out).contains("O9"));
}

#[test]
fn bogus_path_and_granularity_are_usage_errors() {
    let bench = Bench::generate();
    let (_, out) = bench.evaluate(&["--path", "sideways"]);
    assert_status(&out, 2);
    let out = run(&[
        "--config",
        &bench.config(),
        "annotate",
        &bench.samples(),
        "--granularity",
        "verbose",
        "--out",
        bench.root.join("x.jsonl").to_str().unwrap(),
    ]);
    assert_status(&out, 2);
}

#[test]
fn clap_rejects_unknown_flags_with_exit_two() {
    let out = run(&["evaluate", "--no-such-flag"]);
    assert_status(&out, 2);
}

#[test]
fn missing_input_file_is_infrastructure_failure() {
    let out = run(&["evaluate", "/nonexistent/samples.jsonl"]);
    assert_status(&out, 1);
}

#[test]
fn annotate_keeps_every_fixture_backed_row() {
    let bench = Bench::generate();
    let out_path = bench.root.join("annotations.jsonl");
    let out = run(&[
        "--config",
        &bench.config(),
        "annotate",
        &bench.samples(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_status(&out, 0);
    let rows = read_jsonl(&out_path);
    assert_eq!(rows.len(), 32);
    assert!(rows.iter().all(|r| r["status"] == "ok"));
    assert!(rows.iter().all(|r| r["comment"].as_str().unwrap().starts_with("/*")));
    let stats: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(bench.root.join("annotations.stats.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(stats["kept"], 32);
    assert_eq!(stats["rejected"], 0);
}

#[test]
fn annotate_without_fixtures_rejects_rows_but_exits_zero() {
    let bench = Bench::generate();
    let empty = bench.root.join("no-fixtures");
    std::fs::create_dir_all(&empty).unwrap();
    let config_path = bench.root.join("empty.toml");
    std::fs::write(
        &config_path,
        format!(
            "[generator]\nfixture_dir = {:?}\n[refiner]\nfixture_dir = {:?}\n",
            empty.to_str().unwrap(),
            empty.to_str().unwrap()
        ),
    )
    .unwrap();
    let out_path = bench.root.join("rejected.jsonl");
    let out = run(&[
        "--config",
        config_path.to_str().unwrap(),
        "annotate",
        &bench.samples(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_status(&out, 0);
    let rows = read_jsonl(&out_path);
    assert_eq!(rows.len(), 32);
    assert!(rows.iter().all(|r| r["status"] == "rejected"));
    assert!(rows.iter().all(|r| r["reason"] == "backend_unavailable"));
    let stats: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(bench.root.join("rejected.stats.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(stats["backend_unavailable"], 32);
    assert_eq!(stats["kept"], 0);
}

#[test]
fn build_dataset_emits_corpus_with_sidecar_and_manifest() {
    let bench = Bench::generate();
    let out_path = bench.root.join("corpus.jsonl");
    let out = run(&[
        "--config",
        &bench.config(),
        "build-dataset",
        &bench.samples(),
        "--mode",
        "source_only",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_status(&out, 0);
    let rows = read_jsonl(&out_path);
    assert_eq!(rows.len(), 32);
    for row in &rows {
        assert!(row["instruction"].is_string());
        assert!(row["input"].as_str().unwrap().contains("/*"));
        assert!(row["output"].is_string());
    }
    assert!(bench.root.join("corpus.stats.json").is_file());
    assert!(bench.root.join("corpus.manifest.json").is_file());
}

#[test]
fn analyze_writes_pattern_and_length_tables() {
    let bench = Bench::generate();
    let (out_dir, out) = bench.evaluate(&[]);
    assert_status(&out, 0);
    let analysis = bench.root.join("analysis");
    let out = run(&[
        "--config",
        &bench.config(),
        "analyze",
        out_dir.join("records.jsonl").to_str().unwrap(),
        &bench.samples(),
        "--out",
        analysis.to_str().unwrap(),
    ]);
    assert_status(&out, 0);
    let patterns = std::fs::read_to_string(analysis.join("patterns.csv")).unwrap();
    assert!(patterns.starts_with("pattern,total,failures,failure_rate"));
    assert_eq!(patterns.trim_end().lines().count(), 6, "header + five pattern rows");
    let lengths = std::fs::read_to_string(analysis.join("length_curve.csv")).unwrap();
    assert!(lengths.starts_with("bucket,n,passes,re_exec_rate"));
    let total: u64 =
        lengths.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, 32, "length buckets must partition the records");
    assert!(analysis.join("manifest.json").is_file());
}

#[test]
fn analyze_rejects_degenerate_edges() {
    let bench = Bench::generate();
    let (out_dir, out) = bench.evaluate(&["--levels", "O0"]);
    assert_status(&out, 0);
    let out = run(&[
        "analyze",
        out_dir.join("records.jsonl").to_str().unwrap(),
        &bench.samples(),
        "--out",
        bench.root.join("bad").to_str().unwrap(),
        "--edges",
        "100,50",
    ]);
    assert_status(&out, 2);
}

#[test]
fn evaluate_reruns_reproduce_records_except_wall_time() {
    let bench = Bench::generate();
    let strip = |mut v: serde_json::Value| {
        v.as_object_mut().unwrap().remove("wall_time_ms");
        v
    };
    let (dir_a, out_a) = bench.evaluate(&["--levels", "O0,O1"]);
    assert_status(&out_a, 0);
    let (dir_b, out_b) = bench.evaluate(&["--levels", "O0,O1", "--workers", "1"]);
    assert_status(&out_b, 0);
    let a: Vec<_> = read_jsonl(&dir_a.join("records.jsonl")).into_iter().map(strip).collect();
    let b: Vec<_> = read_jsonl(&dir_b.join("records.jsonl")).into_iter().map(strip).collect();
    assert_eq!(a, b);
}
