//! Benchmark sample model and JSONL loading.
//!
//! One sample per line:
//! `{"id", "opt_level", "pseudo_code", "original_asm_raw", "ground_truth", "test_harness"}`.
//! Assembly is stored raw and normalized at load time so files stay
//! diffable against the disassembler output they came from.

use crate::asm::normalize_assembly;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OptLevel {
    #[serde(rename = "O0")]
    O0,
    #[serde(rename = "O1")]
    O1,
    #[serde(rename = "O2")]
    O2,
    #[serde(rename = "O3")]
    O3,
}

impl OptLevel {
    pub const ALL: [OptLevel; 4] = [OptLevel::O0, OptLevel::O1, OptLevel::O2, OptLevel::O3];

    /// Flag suffix digit: `-O{digit}`.
    pub fn digit(self) -> u8 {
        match self {
            OptLevel::O0 => 0,
            OptLevel::O1 => 1,
            OptLevel::O2 => 2,
            OptLevel::O3 => 3,
        }
    }

    pub fn gcc_flag(self) -> String {
        format!("-O{}", self.digit())
    }
}

impl fmt::Display for OptLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "O{}", self.digit())
    }
}

impl FromStr for OptLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "O0" | "0" => Ok(OptLevel::O0),
            "O1" | "1" => Ok(OptLevel::O1),
            "O2" | "2" => Ok(OptLevel::O2),
            "O3" | "3" => Ok(OptLevel::O3),
            other => Err(Error::InvalidConfig {
                detail: format!("unknown optimization level {other:?}"),
            }),
        }
    }
}

/// Wire format of one benchmark line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub opt_level: OptLevel,
    pub pseudo_code: String,
    pub original_asm_raw: String,
    pub ground_truth: String,
    pub test_harness: String,
}

/// In-memory sample with normalized reference assembly attached.
#[derive(Debug, Clone)]
pub struct BenchmarkSample {
    pub id: String,
    pub opt_level: OptLevel,
    pub pseudo_code: String,
    pub original_asm_raw: String,
    pub asm_tokens: Vec<String>,
    pub ground_truth: String,
    pub test_harness: String,
}

impl BenchmarkSample {
    pub fn from_record(record: SampleRecord) -> Result<Self> {
        let asm_tokens = normalize_assembly(&record.original_asm_raw);
        if asm_tokens.is_empty() {
            return Err(Error::MissingReferenceAsm { id: record.id });
        }
        Ok(Self {
            id: record.id,
            opt_level: record.opt_level,
            pseudo_code: record.pseudo_code,
            original_asm_raw: record.original_asm_raw,
            asm_tokens,
            ground_truth: record.ground_truth,
            test_harness: record.test_harness,
        })
    }

    pub fn to_record(&self) -> SampleRecord {
        SampleRecord {
            id: self.id.clone(),
            opt_level: self.opt_level,
            pseudo_code: self.pseudo_code.clone(),
            original_asm_raw: self.original_asm_raw.clone(),
            ground_truth: self.ground_truth.clone(),
            test_harness: self.test_harness.clone(),
        }
    }
}

/// Parse benchmark JSONL from a reader. Blank lines are skipped; any
/// malformed line aborts with its 1-based line number. Duplicate ids and
/// empty inputs are errors.
pub fn read_samples<R: BufRead>(reader: R) -> Result<Vec<BenchmarkSample>> {
    let mut samples: Vec<BenchmarkSample> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SampleRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: idx + 1, detail: e.to_string() })?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId { id: record.id });
        }
        samples.push(BenchmarkSample::from_record(record)?);
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(samples)
}

pub fn load_samples(path: &Path) -> Result<Vec<BenchmarkSample>> {
    let file = std::fs::File::open(path)?;
    read_samples(std::io::BufReader::new(file))
}

pub fn write_samples(path: &Path, samples: &[BenchmarkSample]) -> Result<()> {
    let mut out = String::new();
    for sample in samples {
        out.push_str(&serde_json::to_string(&sample.to_record())?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
