//! Embedded reference functions and the offline demo benchmark.
//!
//! Every entry carries a decompiler-flavored pseudo-code rendition, the
//! clean ground truth, and a self-checking harness (`main` exits 0 on
//! success). `write_mini_benchmark` lays out a complete replayable run:
//! samples, canned generator/refiner completions, and a config pointing at
//! them, with known expected outcomes for the selector and both forced-path
//! ablations.

use crate::backend::write_fixture;
use crate::config::{fill, AppConfig, PromptTemplates};
use crate::corpus::{write_samples, BenchmarkSample, OptLevel, SampleRecord};
use crate::error::{Error, Result};
use crate::rationale::{build_rationale_prompt, compose_comment, Granularity};
use crate::toolchain::Toolchain;
use std::path::{Path, PathBuf};

/// Decompiler output for the pair-difference function: `fabsf` collapsed
/// into a bitwise AND against a data label, array indexing into raw pointer
/// arithmetic.
pub const PAIR_DIFF_PSEUDO: &str = r#"undefined8 func0(float param_1,long param_2,int param_3) {
  int local_10;
  int local_c;
  local_10 = 0;
  do {
    local_c = local_10;
    if (param_3 <= local_10) { return 0; }
    while (local_c = local_c + 1, local_c < param_3) {
      if ((float)(DAT_001020d0 &
                 (uint)(*(float *)(param_2 + (long)local_10 * 4) -
                        *(float *)(param_2 + (long)local_c * 4))) < param_1) {
        return 1;
      }
    }
    local_10 = local_10 + 1;
  } while( true );
}"#;

/// Header comment recovered for the pair-difference function.
pub const PAIR_DIFF_RATIONALE: &str = r#"/*
 * Function: func0
 * Purpose: Compares pairs of float values from an array pointed to by param_2,
 * using a nested loop structure. Returns 1 if any pair difference
 * (absolute value) is less than param_1; otherwise returns 0.
 */"#;

/// Literal translation that keeps the undefined data label and raw casts;
/// does not compile.
pub const PAIR_DIFF_LITERAL: &str = r#"bool func0(float param_1, long param_2, int param_3) {
    for (int i = 0; i < param_3; i++) {
        for (int j = i + 1; j < param_3; j++) {
            // Logical & Syntax Error: Fails to restore fabsf and pointer types
            if ((float)(DAT_001020d0 & (uint)(*(float *)(param_2 + i * 4) -
                                              *(float *)(param_2 + j * 4))) < param_1) {
                return true;
            }
        }
    }
    return false;
}"#;

/// Guided rewrite: recovers `fabsf`, array indexing, and concrete types.
pub const PAIR_DIFF_REFINED: &str = r#"bool func0(float *arr, int n, float eps) {
    int i, j;
    for (i = 0; i < n; i++) {
        for (j = i + 1; j < n; j++) {
            // Success: Perfectly restores fabsf and array indexing semantics
            if (fabsf(arr[i] - arr[j]) < eps) {
                return true;
            }
        }
    }
    return false;
}"#;

pub const PAIR_DIFF_HARNESS: &str = r#"int main(void) {
    float close_pair[4] = {1.0f, 2.8f, 3.0f, 4.0f};
    float spread[3] = {1.0f, 5.0f, 9.5f};
    if (!func0(close_pair, 4, 0.3f)) return 1;
    if (func0(spread, 3, 0.5f)) return 2;
    return 0;
}"#;

/// The data label the literal translation fails on.
pub const UNDEFINED_DATA_LABEL: &str = "DAT_001020d0";

/// Candidate that never compiles, used where a path is meant to fail.
pub const GARBAGE_CANDIDATE: &str = "int broken(void) { return undefined_symbol_xyz; }";

pub struct FixtureFunction {
    pub name: &'static str,
    pub purpose: &'static str,
    pub pseudo: &'static str,
    pub ground_truth: &'static str,
    pub harness: &'static str,
}

pub const FIXTURE_FUNCS: &[FixtureFunction] = &[
    FixtureFunction {
        name: "func0",
        purpose: "Compares all pairs of float values and reports whether any \
                  absolute difference is below a threshold.",
        pseudo: PAIR_DIFF_PSEUDO,
        ground_truth: PAIR_DIFF_REFINED,
        harness: PAIR_DIFF_HARNESS,
    },
    FixtureFunction {
        name: "gcd",
        purpose: "Computes the greatest common divisor of two integers by \
                  repeated remainder.",
        pseudo: "int gcd(int param_1,int param_2) {\n  int local_c;\n  while (param_2 != 0) {\n    local_c = param_1 % param_2;\n    param_1 = param_2;\n    param_2 = local_c;\n  }\n  return param_1;\n}",
        ground_truth: "int gcd(int a, int b) {\n    while (b != 0) {\n        int t = a % b;\n        a = b;\n        b = t;\n    }\n    return a;\n}",
        harness: "int main(void) {\n    if (gcd(54, 24) != 6) return 1;\n    if (gcd(7, 13) != 1) return 2;\n    if (gcd(0, 5) != 5) return 3;\n    return 0;\n}",
    },
    FixtureFunction {
        name: "is_prime",
        purpose: "Tests an integer for primality by trial division up to its \
                  square root.",
        pseudo: "undefined4 is_prime(int param_1) {\n  int local_c;\n  if (param_1 < 2) {\n    return 0;\n  }\n  local_c = 2;\n  while (local_c * local_c <= param_1) {\n    if (param_1 % local_c == 0) {\n      return 0;\n    }\n    local_c = local_c + 1;\n  }\n  return 1;\n}",
        ground_truth: "int is_prime(int n) {\n    if (n < 2) return 0;\n    for (int i = 2; i * i <= n; i++) {\n        if (n % i == 0) return 0;\n    }\n    return 1;\n}",
        harness: "int main(void) {\n    if (!is_prime(2)) return 1;\n    if (!is_prime(13)) return 2;\n    if (is_prime(1)) return 3;\n    if (is_prime(15)) return 4;\n    return 0;\n}",
    },
    FixtureFunction {
        name: "sum_array",
        purpose: "Sums the first n elements of an int array.",
        pseudo: "int sum_array(long param_1,int param_2) {\n  int local_10;\n  int local_c;\n  local_10 = 0;\n  for (local_c = 0; local_c < param_2; local_c = local_c + 1) {\n    local_10 = local_10 + *(int *)(param_1 + (long)local_c * 4);\n  }\n  return local_10;\n}",
        ground_truth: "int sum_array(const int *xs, int n) {\n    int total = 0;\n    for (int i = 0; i < n; i++) total += xs[i];\n    return total;\n}",
        harness: "int main(void) {\n    int xs[5] = {1, 2, 3, 4, 5};\n    if (sum_array(xs, 5) != 15) return 1;\n    if (sum_array(xs, 0) != 0) return 2;\n    return 0;\n}",
    },
    FixtureFunction {
        name: "count_bits",
        purpose: "Counts the set bits of an unsigned integer.",
        pseudo: "int count_bits(uint param_1) {\n  int local_c;\n  local_c = 0;\n  while (param_1 != 0) {\n    local_c = local_c + (param_1 & 1);\n    param_1 = param_1 >> 1;\n  }\n  return local_c;\n}",
        ground_truth: "int count_bits(unsigned int x) {\n    int count = 0;\n    while (x != 0) {\n        count += (int)(x & 1u);\n        x >>= 1;\n    }\n    return count;\n}",
        harness: "int main(void) {\n    if (count_bits(0u) != 0) return 1;\n    if (count_bits(255u) != 8) return 2;\n    if (count_bits(0x80000001u) != 2) return 3;\n    return 0;\n}",
    },
    FixtureFunction {
        name: "clamp",
        purpose: "Clamps a double into the closed interval [lo, hi].",
        pseudo: "double clamp(double param_1,double param_2,double param_3) {\n  if (param_1 < param_2) {\n    return param_2;\n  }\n  if (param_3 < param_1) {\n    return param_3;\n  }\n  return param_1;\n}",
        ground_truth: "double clamp(double x, double lo, double hi) {\n    if (x < lo) return lo;\n    if (x > hi) return hi;\n    return x;\n}",
        harness: "int main(void) {\n    if (clamp(5.0, 0.0, 10.0) != 5.0) return 1;\n    if (clamp(-3.0, 0.0, 10.0) != 0.0) return 2;\n    if (clamp(42.0, 0.0, 10.0) != 10.0) return 3;\n    return 0;\n}",
    },
    FixtureFunction {
        name: "fib",
        purpose: "Computes the nth Fibonacci number iteratively.",
        pseudo: "long fib(int param_1) {\n  long local_18;\n  long local_10;\n  long local_8;\n  int local_c;\n  local_18 = 0;\n  local_10 = 1;\n  for (local_c = 0; local_c < param_1; local_c = local_c + 1) {\n    local_8 = local_18 + local_10;\n    local_18 = local_10;\n    local_10 = local_8;\n  }\n  return local_18;\n}",
        ground_truth: "long fib(int n) {\n    long a = 0;\n    long b = 1;\n    for (int i = 0; i < n; i++) {\n        long next = a + b;\n        a = b;\n        b = next;\n    }\n    return a;\n}",
        harness: "int main(void) {\n    if (fib(0) != 0) return 1;\n    if (fib(1) != 1) return 2;\n    if (fib(10) != 55) return 3;\n    return 0;\n}",
    },
    FixtureFunction {
        name: "reverse_in_place",
        purpose: "Reverses the first n bytes of a buffer in place.",
        pseudo: "void reverse_in_place(long param_1,int param_2) {\n  undefined1 local_d;\n  int local_10;\n  int local_c;\n  local_10 = 0;\n  local_c = param_2 + -1;\n  while (local_10 < local_c) {\n    local_d = *(undefined1 *)(param_1 + local_10);\n    *(undefined1 *)(param_1 + local_10) = *(undefined1 *)(param_1 + local_c);\n    *(undefined1 *)(param_1 + local_c) = local_d;\n    local_10 = local_10 + 1;\n    local_c = local_c + -1;\n  }\n  return;\n}",
        ground_truth: "void reverse_in_place(char *s, int n) {\n    for (int i = 0, j = n - 1; i < j; i++, j--) {\n        char t = s[i];\n        s[i] = s[j];\n        s[j] = t;\n    }\n}",
        harness: "int main(void) {\n    char s[6] = \"abcde\";\n    reverse_in_place(s, 5);\n    if (strcmp(s, \"edcba\") != 0) return 1;\n    return 0;\n}",
    },
    FixtureFunction {
        name: "abs_diff",
        purpose: "Returns the absolute difference of two floats.",
        pseudo: "float abs_diff(float param_1,float param_2) {\n  return (float)(DAT_00102008 & (uint)(param_1 - param_2));\n}",
        ground_truth: "float abs_diff(float a, float b) {\n    return fabsf(a - b);\n}",
        harness: "int main(void) {\n    if (abs_diff(3.5f, 1.0f) != 2.5f) return 1;\n    if (abs_diff(1.0f, 3.5f) != 2.5f) return 2;\n    return 0;\n}",
    },
    FixtureFunction {
        name: "max3",
        purpose: "Returns the largest of three integers.",
        pseudo: "int max3(int param_1,int param_2,int param_3) {\n  int local_c;\n  local_c = param_1;\n  if (local_c < param_2) {\n    local_c = param_2;\n  }\n  if (local_c < param_3) {\n    local_c = param_3;\n  }\n  return local_c;\n}",
        ground_truth: "int max3(int a, int b, int c) {\n    int m = a;\n    if (b > m) m = b;\n    if (c > m) m = c;\n    return m;\n}",
        harness: "int main(void) {\n    if (max3(1, 2, 3) != 3) return 1;\n    if (max3(9, 2, 3) != 9) return 2;\n    if (max3(1, 7, 3) != 7) return 3;\n    return 0;\n}",
    },
    FixtureFunction {
        name: "count_char",
        purpose: "Counts occurrences of a character in a NUL-terminated \
                  string.",
        pseudo: "int count_char(long param_1,char param_2) {\n  int local_c;\n  local_c = 0;\n  while (*(char *)param_1 != '\\0') {\n    if (*(char *)param_1 == param_2) {\n      local_c = local_c + 1;\n    }\n    param_1 = param_1 + 1;\n  }\n  return local_c;\n}",
        ground_truth: "int count_char(const char *s, char target) {\n    int count = 0;\n    while (*s != '\\0') {\n        if (*s == target) count++;\n        s++;\n    }\n    return count;\n}",
        harness: "int main(void) {\n    if (count_char(\"banana\", 'a') != 3) return 1;\n    if (count_char(\"\", 'x') != 0) return 2;\n    return 0;\n}",
    },
    FixtureFunction {
        name: "dot",
        purpose: "Computes the dot product of two double vectors.",
        pseudo: "double dot(long param_1,long param_2,int param_3) {\n  double local_10;\n  int local_c;\n  local_10 = 0.0;\n  for (local_c = 0; local_c < param_3; local_c = local_c + 1) {\n    local_10 = local_10 + *(double *)(param_1 + (long)local_c * 8) * *(double *)(param_2 + (long)local_c * 8);\n  }\n  return local_10;\n}",
        ground_truth: "double dot(const double *a, const double *b, int n) {\n    double total = 0.0;\n    for (int i = 0; i < n; i++) total += a[i] * b[i];\n    return total;\n}",
        harness: "int main(void) {\n    double a[3] = {1.0, 2.0, 3.0};\n    double b[3] = {4.0, 5.0, 6.0};\n    if (dot(a, b, 3) != 32.0) return 1;\n    return 0;\n}",
    },
];

pub fn fixture_by_name(name: &str) -> Option<&'static FixtureFunction> {
    FIXTURE_FUNCS.iter().find(|f| f.name == name)
}

/// What a canned refiner answers on one path for one function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PathPlan {
    Truth,
    Garbage,
    UndefinedLabel,
}

/// Demo-benchmark composition: (function, semantic answer, literal answer).
/// Six functions succeed only through the guided path, `gcd` only through
/// the literal path, and `is_prime` through neither.
const MINI_PLAN: &[(&str, PathPlan, PathPlan)] = &[
    ("func0", PathPlan::Truth, PathPlan::UndefinedLabel),
    ("gcd", PathPlan::Garbage, PathPlan::Truth),
    ("is_prime", PathPlan::Garbage, PathPlan::Garbage),
    ("sum_array", PathPlan::Truth, PathPlan::Garbage),
    ("count_bits", PathPlan::Truth, PathPlan::Garbage),
    ("clamp", PathPlan::Truth, PathPlan::Garbage),
    ("fib", PathPlan::Truth, PathPlan::Garbage),
    ("reverse_in_place", PathPlan::Truth, PathPlan::Garbage),
];

pub const MINI_SAMPLE_TOTAL: usize = 32;
pub const MINI_SELECTED_PASSES: usize = 28;
pub const MINI_SEM_ONLY_PASSES: usize = 24;
pub const MINI_SYN_ONLY_PASSES: usize = 4;

fn plan_source(plan: PathPlan, func: &FixtureFunction) -> &'static str {
    match plan {
        PathPlan::Truth => func.ground_truth,
        PathPlan::Garbage => GARBAGE_CANDIDATE,
        PathPlan::UndefinedLabel => PAIR_DIFF_LITERAL,
    }
}

fn rationale_comment_for(func: &FixtureFunction) -> String {
    if func.name == "func0" {
        PAIR_DIFF_RATIONALE.to_string()
    } else {
        compose_comment(func.name, func.purpose, None)
    }
}

#[derive(Debug, Clone)]
pub struct MiniBenchmark {
    pub root: PathBuf,
    pub samples_path: PathBuf,
    pub generator_fixtures: PathBuf,
    pub refiner_fixtures: PathBuf,
    pub config_path: PathBuf,
}

/// Generate the offline demo benchmark under `dir`: 8 functions at all four
/// optimization levels, canned completions for both backends, and a config
/// wired to replay them.
pub fn write_mini_benchmark(dir: &Path, toolchain: &Toolchain) -> Result<MiniBenchmark> {
    std::fs::create_dir_all(dir)?;
    let root = dir.canonicalize()?;
    let generator_fixtures = root.join("generator-fixtures");
    let refiner_fixtures = root.join("refiner-fixtures");
    std::fs::create_dir_all(&generator_fixtures)?;
    std::fs::create_dir_all(&refiner_fixtures)?;
    let templates = PromptTemplates::default();

    let mut samples: Vec<BenchmarkSample> =
        Vec::with_capacity(MINI_PLAN.len() * OptLevel::ALL.len());
    for (name, sem_plan, syn_plan) in MINI_PLAN {
        let func = fixture_by_name(name).expect("plan names a known fixture");
        let comment = rationale_comment_for(func);
        let gen_prompt = build_rationale_prompt(func.pseudo, Granularity::Concise, &templates);
        write_fixture(&generator_fixtures, &gen_prompt.user, &comment)?;
        let sem_prompt = fill(
            &templates.refine_with_rationale,
            &[("rationale", comment.as_str()), ("code_snippet", func.pseudo)],
        );
        write_fixture(&refiner_fixtures, &sem_prompt, plan_source(*sem_plan, func))?;
        let syn_prompt = fill(&templates.refine_plain, &[("code_snippet", func.pseudo)]);
        write_fixture(&refiner_fixtures, &syn_prompt, plan_source(*syn_plan, func))?;

        for level in OptLevel::ALL {
            let object = toolchain.compile_object(func.ground_truth, level)?;
            if !object.ok {
                return Err(Error::InvalidConfig {
                    detail: format!(
                        "reference function {name} does not compile at {level}: {}",
                        object.diagnostics
                    ),
                });
            }
            let raw = toolchain.disassemble(&object.object_path())?;
            samples.push(BenchmarkSample::from_record(SampleRecord {
                id: format!("{name}_{level}"),
                opt_level: level,
                pseudo_code: func.pseudo.to_string(),
                original_asm_raw: raw,
                ground_truth: func.ground_truth.to_string(),
                test_harness: func.harness.to_string(),
            })?);
        }
    }

    let samples_path = root.join("samples.jsonl");
    write_samples(&samples_path, &samples)?;

    let mut config = AppConfig::default();
    config.generator.fixture_dir = Some(generator_fixtures.clone());
    config.refiner.fixture_dir = Some(refiner_fixtures.clone());
    config.run.output_dir = root.join("eval-out");
    let config_path = root.join("config.toml");
    std::fs::write(&config_path, config.to_toml()?)?;

    Ok(MiniBenchmark { root, samples_path, generator_fixtures, refiner_fixtures, config_path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_samples;
    use crate::toolchain::ToolchainConfig;
    use tempfile::TempDir;

    #[test]
    fn every_reference_function_passes_its_own_harness() {
        let toolchain = Toolchain::new(ToolchainConfig::default());
        for func in FIXTURE_FUNCS {
            let report =
                toolchain.run_unit_tests(func.ground_truth, func.harness, OptLevel::O0).unwrap();
            assert!(
                report.passed(),
                "{} failed: {:?} {}",
                func.name,
                report.status,
                report.diagnostics
            );
        }
    }

    #[test]
    fn fixture_names_are_unique_and_plan_names_resolve() {
        let mut names: Vec<&str> = FIXTURE_FUNCS.iter().map(|f| f.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), FIXTURE_FUNCS.len());
        for (name, _, _) in MINI_PLAN {
            assert!(fixture_by_name(name).is_some(), "unknown plan entry {name}");
        }
        assert_eq!(MINI_PLAN.len() * OptLevel::ALL.len(), MINI_SAMPLE_TOTAL);
    }

    #[test]
    fn literal_translation_fails_on_the_data_label() {
        let toolchain = Toolchain::new(ToolchainConfig::default());
        let object = toolchain.compile_object(PAIR_DIFF_LITERAL, OptLevel::O0).unwrap();
        assert!(!object.ok);
        assert!(
            object.diagnostics.contains(UNDEFINED_DATA_LABEL),
            "diagnostics do not name the label: {}",
            object.diagnostics
        );
    }

    #[test]
    fn refined_output_recovers_the_pair_difference_behavior() {
        let toolchain = Toolchain::new(ToolchainConfig::default());
        let report =
            toolchain.run_unit_tests(PAIR_DIFF_REFINED, PAIR_DIFF_HARNESS, OptLevel::O2).unwrap();
        assert!(report.passed(), "{:?} {}", report.status, report.diagnostics);
        let garbage = toolchain.compile_object(GARBAGE_CANDIDATE, OptLevel::O0).unwrap();
        assert!(!garbage.ok);
    }

    #[test]
    fn mini_benchmark_layout_is_complete_and_loadable() {
        let toolchain = Toolchain::new(ToolchainConfig::default());
        let dir = TempDir::new().unwrap();
        let bench = write_mini_benchmark(dir.path(), &toolchain).unwrap();
        let samples = load_samples(&bench.samples_path).unwrap();
        assert_eq!(samples.len(), MINI_SAMPLE_TOTAL);
        assert!(samples.iter().all(|s| !s.asm_tokens.is_empty()));
        let gen_count = std::fs::read_dir(&bench.generator_fixtures).unwrap().count();
        let ref_count = std::fs::read_dir(&bench.refiner_fixtures).unwrap().count();
        assert_eq!(gen_count, MINI_PLAN.len());
        assert_eq!(ref_count, MINI_PLAN.len() * 2);
        let config = AppConfig::load(&bench.config_path).unwrap();
        assert_eq!(
            config.generator.fixture_dir.as_deref(),
            Some(bench.generator_fixtures.as_path())
        );
        assert_eq!(config.refiner.fixture_dir.as_deref(), Some(bench.refiner_fixtures.as_path()));
    }
}
