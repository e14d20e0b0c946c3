//! Run configuration: one TOML file covering the toolchain, both model
//! backends, metric parameters, evaluation settings, prompt templates and
//! filtering limits.
//!
//! Templates use `{code_snippet}` and `{rationale}` placeholders, filled by
//! a single-pass substitution so placeholder-looking text inside a value is
//! never re-expanded. Secrets stay out of the file: backend sections name an
//! environment variable, and the key is read at request time.

use crate::backend::{sha256_hex, BackendConfig};
use crate::corpus::OptLevel;
use crate::error::{Error, Result};
use crate::metric::BleuConfig;
use crate::rationale::Granularity;
use crate::toolchain::ToolchainConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Stage I prompt, concise form: asks for a header comment with function
/// name and purpose, plus the logic-check heuristics for loop shape and
/// bitwise absolute-value idioms.
pub const RATIONALE_TEMPLATE_CONCISE: &str = r#"Instruction: You are an expert C code analyst.
Task: Read the following C function and generate a standard multi-line header comment (/* ... */) for it.
Source Code:
{code_snippet}
Requirements:
1. Output ONLY the comment block. Do not output the source code.
2. The comment must start with /* and end with */.
3. Content:
   - Function: [Name]
   - Purpose: [Concise description]
CRITICAL LOGIC CHECK (Must Follow):
- Loop Analysis: Check how the inner loop initializes. If the inner loop index initializes using the outer loop's index (e.g., inner = outer or inner = outer + 1), explicitly describe it as comparing "all pairs" or "combinations". STRICTLY FORBID the word "adjacent" unless the code strictly checks i vs i+1.
- Bitwise Magic: If you see a float being cast to int/uint and AND-ed (&) with a constant (like 0x7FFFFFFF) OR a global data label (e.g., DAT_..., PTR_...), treat this as calculating the "absolute value" (fabs).
"#;

/// Detailed form: same template with three extra requested fields.
pub const RATIONALE_TEMPLATE_DETAILED: &str = r#"Instruction: You are an expert C code analyst.
Task: Read the following C function and generate a standard multi-line header comment (/* ... */) for it.
Source Code:
{code_snippet}
Requirements:
1. Output ONLY the comment block. Do not output the source code.
2. The comment must start with /* and end with */.
3. Content:
   - Function: [Name]
   - Purpose: [Concise description]
   - Inputs: [Parameter roles]
   - Outputs: [Return value and side effects]
   - Implicit Operations: [Recovered idioms such as fabs or array indexing]
CRITICAL LOGIC CHECK (Must Follow):
- Loop Analysis: Check how the inner loop initializes. If the inner loop index initializes using the outer loop's index (e.g., inner = outer or inner = outer + 1), explicitly describe it as comparing "all pairs" or "combinations". STRICTLY FORBID the word "adjacent" unless the code strictly checks i vs i+1.
- Bitwise Magic: If you see a float being cast to int/uint and AND-ed (&) with a constant (like 0x7FFFFFFF) OR a global data label (e.g., DAT_..., PTR_...), treat this as calculating the "absolute value" (fabs).
"#;

/// Stage II instruction. The same text is the `instruction` field of every
/// training sample, so inference prompts and training inputs stay
/// byte-identical.
pub const REFINE_INSTRUCTION: &str = "Rewrite the decompiled pseudo-code below into clean, compilable C code that preserves the original behavior. Recover concrete types, array indexing, and standard library calls. Output only the C function.";

fn default_refine_with_rationale() -> String {
    format!("{REFINE_INSTRUCTION}\n\n{{rationale}}\n{{code_snippet}}")
}

fn default_refine_plain() -> String {
    format!("{REFINE_INSTRUCTION}\n\n{{code_snippet}}")
}

fn default_rationale_concise() -> String {
    RATIONALE_TEMPLATE_CONCISE.to_string()
}

fn default_rationale_detailed() -> String {
    RATIONALE_TEMPLATE_DETAILED.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplates {
    pub rationale_concise: String,
    pub rationale_detailed: String,
    pub refine_with_rationale: String,
    pub refine_plain: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            rationale_concise: default_rationale_concise(),
            rationale_detailed: default_rationale_detailed(),
            refine_with_rationale: default_refine_with_rationale(),
            refine_plain: default_refine_plain(),
        }
    }
}

/// Single-pass placeholder substitution: each `{name}` in the template is
/// replaced once; substituted values are never rescanned.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'scan: while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let after = &rest[pos..];
        for (key, value) in vars {
            if after.len() > key.len() + 1
                && after.as_bytes()[key.len() + 1] == b'}'
                && after[1..].starts_with(key)
            {
                out.push_str(value);
                rest = &after[key.len() + 2..];
                continue 'scan;
            }
        }
        out.push('{');
        rest = &after[1..];
    }
    out.push_str(rest);
    out
}

/// Rejection thresholds for Stage I filtering, in lexical tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub max_rationale_tokens: usize,
    pub max_seq_tokens: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_rationale_tokens: 256, max_seq_tokens: 2048 }
    }
}

/// Evaluation run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub workers: usize,
    pub exec_timeout_ms: u64,
    pub opt_levels: Vec<OptLevel>,
    pub output_dir: PathBuf,
    /// Sort records by sample id before writing (on by default; turning it
    /// off preserves input order).
    pub seed_ordering: bool,
    /// Rationale granularity used during evaluation.
    pub granularity: Granularity,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            workers: 4,
            exec_timeout_ms: 10_000,
            opt_levels: OptLevel::ALL.to_vec(),
            output_dir: PathBuf::from("eval-out"),
            seed_ordering: true,
            granularity: Granularity::Concise,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct AppConfig {
    pub toolchain: ToolchainConfig,
    pub generator: BackendConfig,
    pub refiner: BackendConfig,
    pub bleu: BleuConfig,
    pub run: RunConfig,
    pub limits: Limits,
    pub prompt_templates: PromptTemplates,
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: AppConfig = toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig { detail: format!("{}: {e}", path.display()) })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let need = |template: &str, name: &str, placeholder: &str| -> Result<()> {
            if !template.contains(placeholder) {
                return Err(Error::InvalidConfig {
                    detail: format!("template {name} is missing the {placeholder} placeholder"),
                });
            }
            Ok(())
        };
        let t = &self.prompt_templates;
        need(&t.rationale_concise, "rationale_concise", "{code_snippet}")?;
        need(&t.rationale_detailed, "rationale_detailed", "{code_snippet}")?;
        need(&t.refine_with_rationale, "refine_with_rationale", "{code_snippet}")?;
        need(&t.refine_with_rationale, "refine_with_rationale", "{rationale}")?;
        need(&t.refine_plain, "refine_plain", "{code_snippet}")?;
        if self.run.workers == 0 {
            return Err(Error::InvalidConfig { detail: "run.workers must be >= 1".to_string() });
        }
        if self.run.exec_timeout_ms == 0 {
            return Err(Error::InvalidConfig {
                detail: "run.exec_timeout_ms must be > 0".to_string(),
            });
        }
        if self.run.opt_levels.is_empty() {
            return Err(Error::InvalidConfig {
                detail: "run.opt_levels must not be empty".to_string(),
            });
        }
        if self.limits.max_rationale_tokens == 0 || self.limits.max_seq_tokens == 0 {
            return Err(Error::InvalidConfig { detail: "limits must be positive".to_string() });
        }
        if self.bleu.max_n == 0 {
            return Err(Error::InvalidConfig { detail: "bleu.max_n must be >= 1".to_string() });
        }
        Ok(())
    }

    /// Stable content hash of the full configuration, for run manifests.
    pub fn digest(&self) -> Result<String> {
        Ok(sha256_hex(serde_json::to_string(self)?.as_bytes()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidConfig { detail: e.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_substitutes_each_placeholder_once() {
        let out = fill("a {x} b {y} c", &[("x", "1"), ("y", "2")]);
        assert_eq!(out, "a 1 b 2 c");
    }

    #[test]
    fn fill_does_not_rescan_substituted_values() {
        let out = fill("{code_snippet}", &[("code_snippet", "has {rationale} inside")]);
        assert_eq!(out, "has {rationale} inside");
        let out = fill("{a}{b}", &[("a", "{b}"), ("b", "X")]);
        assert_eq!(out, "{b}X");
    }

    #[test]
    fn fill_leaves_unknown_braces_alone() {
        assert_eq!(fill("int f() { return {x}; }", &[("x", "0")]), "int f() { return 0; }");
        assert_eq!(fill("{unknown}", &[]), "{unknown}");
        assert_eq!(fill("trailing {", &[]), "trailing {");
    }

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let config = AppConfig::default();
        config.validate().unwrap();
        let text = config.to_toml().unwrap();
        let back: AppConfig = toml::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back.digest().unwrap(), config.digest().unwrap());
    }

    #[test]
    fn templates_carry_required_placeholders_and_heuristics() {
        let t = PromptTemplates::default();
        for template in [&t.rationale_concise, &t.rationale_detailed] {
            assert!(template.contains("{code_snippet}"));
            assert!(template.contains("Output ONLY the comment block"));
            assert!(template.contains("CRITICAL LOGIC CHECK"));
            assert!(template.contains("Bitwise Magic"));
            assert!(template.contains("STRICTLY FORBID the word \"adjacent\""));
        }
        assert!(t.rationale_detailed.contains("Inputs:"));
        assert!(t.rationale_detailed.contains("Outputs:"));
        assert!(t.rationale_detailed.contains("Implicit Operations:"));
        assert!(!t.rationale_concise.contains("Inputs:"));
    }

    #[test]
    fn missing_placeholder_fails_validation() {
        let mut config = AppConfig::default();
        config.prompt_templates.refine_plain = "no placeholder here".to_string();
        assert!(matches!(config.validate(), Err(Error::InvalidConfig { .. })));
    }

    #[test]
    fn zero_workers_fails_validation() {
        let mut config = AppConfig::default();
        config.run.workers = 0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn digest_changes_with_content() {
        let a = AppConfig::default();
        let mut b = AppConfig::default();
        b.run.workers = 9;
        assert_ne!(a.digest().unwrap(), b.digest().unwrap());
    }
}
