//! C toolchain driving: compile, disassemble, link and execute.
//!
//! Every build runs in its own temporary workspace with fixed file names
//! (`candidate.c`, `candidate.o`, `program`), and objdump runs with the
//! workspace as its working directory, so no absolute path ever appears in
//! diagnostics or disassembly. Compiler and child-process output goes to log
//! files, not pipes, so a diagnostic flood cannot deadlock the parent.
//!
//! Failure policy: a candidate that does not compile, crashes, or times out
//! is a scored outcome, not an `Err`. `Err` is reserved for a broken
//! environment (missing tools, I/O failures, undisassemblable objects).

use crate::corpus::{BenchmarkSample, OptLevel};
use crate::error::{Error, Result};
use crate::metric::{bleu, BleuConfig};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::time::{Duration, Instant};
use tempfile::TempDir;

/// Headers prepended to every compiled source. Model output frequently uses
/// `bool`, `fabsf` or `malloc` without writing includes; headers emit no
/// object code, so reference assembly is unaffected.
pub const INCLUDE_PREAMBLE: &str = "#include <stdio.h>\n\
#include <stdlib.h>\n\
#include <string.h>\n\
#include <math.h>\n\
#include <stdbool.h>\n\
#include <stdint.h>\n";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolchainConfig {
    pub cc: String,
    pub objdump: String,
    pub extra_flags: Vec<String>,
    pub objdump_flags: Vec<String>,
    /// Parent directory for per-build scratch workspaces; `None` uses the
    /// system temp directory.
    pub workspace_root: Option<PathBuf>,
    pub compile_timeout_ms: u64,
    pub exec_timeout_ms: u64,
}

impl Default for ToolchainConfig {
    fn default() -> Self {
        Self {
            cc: "gcc".to_string(),
            objdump: "objdump".to_string(),
            extra_flags: vec![],
            objdump_flags: vec!["-d".to_string(), "--no-show-raw-insn".to_string()],
            workspace_root: None,
            compile_timeout_ms: 30_000,
            exec_timeout_ms: 10_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolchainInfo {
    pub cc_version: String,
    pub objdump_version: String,
}

/// A finished object build. Holds its scratch directory alive so the object
/// file stays readable until the outcome is dropped.
#[derive(Debug)]
pub struct CompiledObject {
    workspace: TempDir,
    pub ok: bool,
    pub diagnostics: String,
}

impl CompiledObject {
    pub fn object_path(&self) -> PathBuf {
        self.workspace.path().join("candidate.o")
    }
}

/// A finished program build.
#[derive(Debug)]
pub struct CompiledProgram {
    workspace: TempDir,
    pub ok: bool,
    pub diagnostics: String,
}

impl CompiledProgram {
    pub fn binary_path(&self) -> PathBuf {
        self.workspace.path().join("program")
    }
}

/// Outcome of compiling one candidate and comparing its disassembly against
/// the sample's reference tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub compiled: bool,
    pub consistency: f64,
    pub diagnostics: String,
}

impl ScoreReport {
    pub fn failed(diagnostics: String) -> Self {
        Self { compiled: false, consistency: 0.0, diagnostics }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExecStatus {
    BuildFailed,
    Pass,
    WrongOutput { code: i32 },
    Crash { signal: Option<i32> },
    Timeout,
}

impl ExecStatus {
    pub fn label(&self) -> String {
        match self {
            ExecStatus::BuildFailed => "build_failed".to_string(),
            ExecStatus::Pass => "pass".to_string(),
            ExecStatus::WrongOutput { code } => format!("wrong_output({code})"),
            ExecStatus::Crash { signal: Some(s) } => format!("crash(sig{s})"),
            ExecStatus::Crash { signal: None } => "crash".to_string(),
            ExecStatus::Timeout => "timeout".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExecReport {
    pub compiled: bool,
    pub status: ExecStatus,
    pub diagnostics: String,
}

impl ExecReport {
    pub fn passed(&self) -> bool {
        self.status == ExecStatus::Pass
    }
}

pub struct Toolchain {
    config: ToolchainConfig,
}

fn spawn_tool(cmd: &mut Command, tool: &str) -> Result<Child> {
    cmd.spawn().map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::ToolchainMissing { tool: tool.to_string() }
        } else {
            Error::Io(e)
        }
    })
}

/// Poll the child until it exits or the deadline passes. `None` means the
/// child was killed after timing out.
fn wait_with_timeout(child: &mut Child, timeout: Duration) -> std::io::Result<Option<ExitStatus>> {
    let deadline = Instant::now() + timeout;
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(Some(status));
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(None);
        }
        std::thread::sleep(Duration::from_millis(5));
    }
}

fn read_log(path: &Path) -> String {
    std::fs::read(path)
        .map(|bytes| String::from_utf8_lossy(&bytes).into_owned())
        .unwrap_or_default()
}

impl Toolchain {
    pub fn new(config: ToolchainConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &ToolchainConfig {
        &self.config
    }

    fn scratch_dir(&self) -> Result<TempDir> {
        let dir = match &self.config.workspace_root {
            Some(root) => {
                std::fs::create_dir_all(root)?;
                TempDir::with_prefix_in("build-", root)?
            }
            None => TempDir::with_prefix("build-")?,
        };
        Ok(dir)
    }

    fn version_line(&self, tool: &str) -> Result<String> {
        let out =
            Command::new(tool).arg("--version").stdin(Stdio::null()).output().map_err(|e| {
                if e.kind() == std::io::ErrorKind::NotFound {
                    Error::ToolchainMissing { tool: tool.to_string() }
                } else {
                    Error::Io(e)
                }
            })?;
        let text = String::from_utf8_lossy(&out.stdout);
        Ok(text.lines().next().unwrap_or("unknown").trim().to_string())
    }

    /// Verify both tools exist and report their versions.
    pub fn probe(&self) -> Result<ToolchainInfo> {
        Ok(ToolchainInfo {
            cc_version: self.version_line(&self.config.cc)?,
            objdump_version: self.version_line(&self.config.objdump)?,
        })
    }

    fn run_cc(&self, workspace: &Path, args: &[String]) -> Result<(bool, String)> {
        let log_path = workspace.join("cc.log");
        let log = File::create(&log_path)?;
        let mut child = spawn_tool(
            Command::new(&self.config.cc)
                .args(args)
                .current_dir(workspace)
                .stdin(Stdio::null())
                .stdout(log.try_clone()?)
                .stderr(log),
            &self.config.cc,
        )?;
        let timeout = Duration::from_millis(self.config.compile_timeout_ms);
        match wait_with_timeout(&mut child, timeout)? {
            Some(status) => Ok((status.success(), read_log(&log_path))),
            None => Ok((false, format!("compiler timed out after {timeout:?}"))),
        }
    }

    /// Compile one translation unit to an object file at the given level.
    pub fn compile_object(&self, source: &str, opt_level: OptLevel) -> Result<CompiledObject> {
        let workspace = self.scratch_dir()?;
        let unit = format!("{INCLUDE_PREAMBLE}{source}\n");
        std::fs::write(workspace.path().join("candidate.c"), unit)?;
        let mut args = vec![
            "-c".to_string(),
            opt_level.gcc_flag(),
            "candidate.c".to_string(),
            "-o".to_string(),
            "candidate.o".to_string(),
        ];
        args.extend(self.config.extra_flags.iter().cloned());
        let (ok, diagnostics) = self.run_cc(workspace.path(), &args)?;
        Ok(CompiledObject { workspace, ok, diagnostics })
    }

    /// Disassemble an object file, returning raw objdump text. Runs with the
    /// object's directory as cwd so the path in the header is just the file
    /// name.
    pub fn disassemble(&self, object: &Path) -> Result<String> {
        let dir = object.parent().ok_or_else(|| Error::DisassemblyFailed {
            detail: format!("object path {} has no parent", object.display()),
        })?;
        let name = object
            .file_name()
            .ok_or_else(|| Error::DisassemblyFailed {
                detail: format!("object path {} has no file name", object.display()),
            })?
            .to_string_lossy()
            .into_owned();
        let out_path = dir.join("objdump.out");
        let err_path = dir.join("objdump.err");
        let mut child = spawn_tool(
            Command::new(&self.config.objdump)
                .args(&self.config.objdump_flags)
                .arg(&name)
                .current_dir(dir)
                .stdin(Stdio::null())
                .stdout(File::create(&out_path)?)
                .stderr(File::create(&err_path)?),
            &self.config.objdump,
        )?;
        let timeout = Duration::from_millis(self.config.compile_timeout_ms);
        let status = wait_with_timeout(&mut child, timeout)?;
        match status {
            Some(s) if s.success() => Ok(read_log(&out_path)),
            Some(_) => Err(Error::DisassemblyFailed { detail: read_log(&err_path) }),
            None => Err(Error::DisassemblyFailed {
                detail: format!("objdump timed out after {timeout:?}"),
            }),
        }
    }

    /// Compile a candidate at the sample's level and score its normalized
    /// disassembly against the sample's reference tokens. Compile failure
    /// scores zero.
    pub fn score_candidate(
        &self,
        source: &str,
        sample: &BenchmarkSample,
        bleu_cfg: &BleuConfig,
    ) -> Result<ScoreReport> {
        let object = self.compile_object(source, sample.opt_level)?;
        if !object.ok {
            return Ok(ScoreReport::failed(object.diagnostics));
        }
        let raw = self.disassemble(&object.object_path())?;
        let tokens = crate::asm::normalize_assembly(&raw);
        let consistency = bleu(&tokens, &sample.asm_tokens, bleu_cfg);
        Ok(ScoreReport { compiled: true, consistency, diagnostics: object.diagnostics })
    }

    /// Build candidate + harness as one program (`-lm` linked).
    pub fn compile_program(
        &self,
        candidate: &str,
        harness: &str,
        opt_level: OptLevel,
    ) -> Result<CompiledProgram> {
        let workspace = self.scratch_dir()?;
        let unit = format!("{INCLUDE_PREAMBLE}{candidate}\n{harness}\n");
        std::fs::write(workspace.path().join("program.c"), unit)?;
        let mut args = vec![
            opt_level.gcc_flag(),
            "program.c".to_string(),
            "-o".to_string(),
            "program".to_string(),
            "-lm".to_string(),
        ];
        args.extend(self.config.extra_flags.iter().cloned());
        let (ok, diagnostics) = self.run_cc(workspace.path(), &args)?;
        Ok(CompiledProgram { workspace, ok, diagnostics })
    }

    fn run_binary(&self, program: &CompiledProgram) -> Result<ExecStatus> {
        let mut child = spawn_tool(
            Command::new(program.binary_path())
                .current_dir(program.workspace.path())
                .stdin(Stdio::null())
                .stdout(Stdio::null())
                .stderr(Stdio::null()),
            "candidate binary",
        )?;
        let timeout = Duration::from_millis(self.config.exec_timeout_ms);
        let Some(status) = wait_with_timeout(&mut child, timeout)? else {
            return Ok(ExecStatus::Timeout);
        };
        Ok(match status.code() {
            Some(0) => ExecStatus::Pass,
            Some(code) => ExecStatus::WrongOutput { code },
            None => {
                #[cfg(unix)]
                let signal = std::os::unix::process::ExitStatusExt::signal(&status);
                #[cfg(not(unix))]
                let signal = None;
                ExecStatus::Crash { signal }
            }
        })
    }

    /// Link the candidate with its test harness and execute it. Exit code 0
    /// means the harness's checks all held.
    pub fn run_unit_tests(
        &self,
        candidate: &str,
        harness: &str,
        opt_level: OptLevel,
    ) -> Result<ExecReport> {
        let program = self.compile_program(candidate, harness, opt_level)?;
        if !program.ok {
            return Ok(ExecReport {
                compiled: false,
                status: ExecStatus::BuildFailed,
                diagnostics: program.diagnostics,
            });
        }
        let status = self.run_binary(&program)?;
        Ok(ExecReport { compiled: true, status, diagnostics: program.diagnostics })
    }
}
