//! Chat model backends.
//!
//! `ChatBackend` is a synchronous trait: callers block, and the evaluation
//! harness gets its parallelism from worker threads rather than async I/O.
//! Three implementations:
//!
//! - `HttpBackend` speaks the OpenAI-style `/chat/completions` wire format
//!   with bounded retry on transport errors, 429 and 5xx, and a semaphore
//!   capping in-flight requests.
//! - `MockBackend` replays fixture files named by the SHA-256 of the user
//!   prompt, for deterministic offline runs.
//! - `RecordingBackend` wraps any backend and writes those fixture files,
//!   so a live run can be replayed later.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub system: Option<String>,
    pub user: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl CompletionRequest {
    pub fn new(user: impl Into<String>) -> Self {
        Self { system: None, user: user.into(), max_tokens: 1024, temperature: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion>;
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Fixture file stem for a prompt: hex SHA-256 of the user text.
pub fn fixture_key(user_text: &str) -> String {
    sha256_hex(user_text.as_bytes())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token, if the endpoint needs one.
    pub api_key_env: Option<String>,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub max_concurrency: usize,
    pub request_timeout_ms: u64,
    /// Replay completions from this fixture directory instead of calling the
    /// endpoint.
    pub fixture_dir: Option<PathBuf>,
    /// Record live completions into this directory as replayable fixtures.
    pub record_dir: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".to_string(),
            model: "local".to_string(),
            api_key_env: None,
            max_retries: 3,
            backoff_ms: 250,
            max_concurrency: 4,
            request_timeout_ms: 120_000,
            fixture_dir: None,
            record_dir: None,
        }
    }
}

/// Build the backend a config section describes: fixture replay when
/// `fixture_dir` is set, otherwise HTTP, optionally recording fixtures.
pub fn make_backend(config: &BackendConfig) -> Result<Box<dyn ChatBackend>> {
    if let Some(dir) = &config.fixture_dir {
        return Ok(Box::new(MockBackend::new(dir)?));
    }
    let http = HttpBackend::new(config.clone())?;
    match &config.record_dir {
        Some(dir) => Ok(Box::new(RecordingBackend::new(http, dir)?)),
        None => Ok(Box::new(http)),
    }
}

/// Counting semaphore; guard releases its permit on drop.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(count: usize) -> Self {
        Self { permits: Mutex::new(count.max(1)), available: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut permits = self.0.permits.lock().unwrap();
        *permits += 1;
        self.0.available.notify_one();
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    max_tokens: u32,
    temperature: f64,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessageOwned,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessageOwned {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    gate: Semaphore,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.request_timeout_ms))
            .build()
            .map_err(|e| Error::BackendUnavailable { detail: e.to_string() })?;
        let gate = Semaphore::new(config.max_concurrency);
        Ok(Self { config, client, gate })
    }

    fn bearer(&self) -> Option<String> {
        let var = self.config.api_key_env.as_deref()?;
        std::env::var(var).ok().filter(|v| !v.is_empty())
    }

    fn attempt(&self, request: &CompletionRequest) -> std::result::Result<Completion, Attempt> {
        let mut messages = Vec::new();
        if let Some(system) = &request.system {
            messages.push(WireMessage { role: "system", content: system });
        }
        messages.push(WireMessage { role: "user", content: &request.user });
        let body = WireRequest {
            model: &self.config.model,
            messages,
            max_tokens: request.max_tokens,
            temperature: request.temperature,
        };
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut builder = self.client.post(&url).json(&body);
        if let Some(token) = self.bearer() {
            builder = builder.bearer_auth(token);
        }
        let response = builder.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Attempt::Retry(format!("status {status}")));
        }
        if !status.is_success() {
            let head: String = response.text().unwrap_or_default().chars().take(200).collect();
            return Err(Attempt::Fatal(Error::BackendUnavailable {
                detail: format!("status {status}: {head}"),
            }));
        }
        let parsed: WireResponse = response
            .json()
            .map_err(|e| Attempt::Fatal(Error::BackendUnavailable { detail: e.to_string() }))?;
        let Some(choice) = parsed.choices.into_iter().next() else {
            return Err(Attempt::Fatal(Error::BackendUnavailable {
                detail: "response had no choices".to_string(),
            }));
        };
        let text = choice.message.content.unwrap_or_default();
        if choice.finish_reason.as_deref() == Some("length") {
            return Err(Attempt::Fatal(Error::ResponseTruncated { text }));
        }
        if text.trim().is_empty() {
            return Err(Attempt::Fatal(Error::EmptyGeneration));
        }
        Ok(Completion { text })
    }
}

enum Attempt {
    Retry(String),
    Fatal(Error),
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        let _permit = self.gate.acquire();
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let backoff = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(backoff));
            }
            match self.attempt(request) {
                Ok(completion) => return Ok(completion),
                Err(Attempt::Fatal(err)) => return Err(err),
                Err(Attempt::Retry(detail)) => last = detail,
            }
        }
        Err(Error::BackendUnavailable {
            detail: format!(
                "gave up after {} attempts, last error: {last}",
                self.config.max_retries + 1
            ),
        })
    }
}

/// Replays canned completions from `<dir>/<sha256(user)>.txt`.
pub struct MockBackend {
    dir: PathBuf,
}

impl MockBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(Error::FixtureDirMissing { path: dir });
        }
        Ok(Self { dir })
    }

    pub fn fixture_path(&self, request: &CompletionRequest) -> PathBuf {
        self.dir.join(format!("{}.txt", fixture_key(&request.user)))
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        let path = self.fixture_path(request);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(Completion { text }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                let head: String = request.user.chars().take(80).collect();
                Err(Error::BackendUnavailable {
                    detail: format!("no fixture {} for prompt starting {head:?}", path.display()),
                })
            }
            Err(e) => Err(Error::Io(e)),
        }
    }
}

/// Passes requests through and saves each completion as a replay fixture.
pub struct RecordingBackend<B> {
    inner: B,
    dir: PathBuf,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { inner, dir })
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        let completion = self.inner.complete(request)?;
        let path = self.dir.join(format!("{}.txt", fixture_key(&request.user)));
        std::fs::write(path, &completion.text)?;
        Ok(completion)
    }
}

/// Write a fixture answering `user_text` with `text`. Used by generators and
/// tests to stage `MockBackend` directories.
pub fn write_fixture(dir: &Path, user_text: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{}.txt", fixture_key(user_text))), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    use tempfile::TempDir;

    #[test]
    fn fixture_key_is_sha256_hex() {
        // well-known digest of "hello"
        assert_eq!(
            fixture_key("hello"),
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
    }

    #[test]
    fn mock_backend_replays_fixtures() {
        let dir = TempDir::new().unwrap();
        write_fixture(dir.path(), "what is 2+2", "4").unwrap();
        let backend = MockBackend::new(dir.path()).unwrap();
        let got = backend.complete(&CompletionRequest::new("what is 2+2")).unwrap();
        assert_eq!(got.text, "4");
    }

    #[test]
    fn missing_fixture_is_backend_unavailable() {
        let dir = TempDir::new().unwrap();
        let backend = MockBackend::new(dir.path()).unwrap();
        match backend.complete(&CompletionRequest::new("unseen prompt")) {
            Err(Error::BackendUnavailable { detail }) => {
                assert!(detail.contains("unseen prompt"));
            }
            other => panic!("expected BackendUnavailable, got {other:?}"),
        }
    }

    #[test]
    fn missing_fixture_dir_is_its_own_error() {
        match MockBackend::new("/nonexistent/fixtures-for-this-test") {
            Err(Error::FixtureDirMissing { path }) => {
                assert!(path.to_string_lossy().contains("nonexistent"));
            }
            other => panic!("expected FixtureDirMissing, got {:?}", other.err()),
        }
    }

    struct CannedBackend(String);

    impl ChatBackend for CannedBackend {
        fn complete(&self, _request: &CompletionRequest) -> Result<Completion> {
            Ok(Completion { text: self.0.clone() })
        }
    }

    #[test]
    fn recording_then_replaying_round_trips() {
        let dir = TempDir::new().unwrap();
        let recorder = RecordingBackend::new(
            CannedBackend("int f(void) { return 1; }".to_string()),
            dir.path(),
        )
        .unwrap();
        let request = CompletionRequest::new("refine this");
        let live = recorder.complete(&request).unwrap();
        let replay = MockBackend::new(dir.path()).unwrap().complete(&request).unwrap();
        assert_eq!(live, replay);
    }

    #[test]
    fn semaphore_caps_concurrency() {
        let sem = Arc::new(Semaphore::new(2));
        let active = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (sem, active, peak) = (sem.clone(), active.clone(), peak.clone());
                std::thread::spawn(move || {
                    let _permit = sem.acquire();
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(20));
                    active.fetch_sub(1, Ordering::SeqCst);
                })
            })
            .collect();
        for handle in handles {
            handle.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }

    /// One-shot HTTP stub: answers scripted (status, body) pairs in order.
    fn stub_server(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<usize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut served = 0usize;
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = vec![0u8; 65536];
                let mut read = 0usize;
                // read until header terminator, then trust the body fits one read
                loop {
                    let n = stream.read(&mut buf[read..]).unwrap();
                    read += n;
                    if n == 0 || buf[..read].windows(4).any(|w| w == b"\r\n\r\n") {
                        break;
                    }
                }
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
                served += 1;
            }
            served
        });
        (format!("http://{addr}/v1"), handle)
    }

    fn ok_body(content: &str, finish: &str) -> String {
        serde_json::json!({
            "choices": [{
                "message": {"role": "assistant", "content": content},
                "finish_reason": finish
            }]
        })
        .to_string()
    }

    #[test]
    fn http_backend_retries_server_errors() {
        let (base_url, handle) =
            stub_server(vec![(500, "{}".to_string()), (200, ok_body("recovered", "stop"))]);
        let backend = HttpBackend::new(BackendConfig {
            base_url,
            max_retries: 3,
            backoff_ms: 1,
            ..BackendConfig::default()
        })
        .unwrap();
        let got = backend.complete(&CompletionRequest::new("ping")).unwrap();
        assert_eq!(got.text, "recovered");
        assert_eq!(handle.join().unwrap(), 2);
    }

    #[test]
    fn http_backend_gives_up_after_max_retries() {
        let (base_url, handle) =
            stub_server(vec![(500, "{}".to_string()), (503, "{}".to_string())]);
        let backend = HttpBackend::new(BackendConfig {
            base_url,
            max_retries: 1,
            backoff_ms: 1,
            ..BackendConfig::default()
        })
        .unwrap();
        match backend.complete(&CompletionRequest::new("ping")) {
            Err(Error::BackendUnavailable { detail }) => {
                assert!(detail.contains("2 attempts"), "detail: {detail}");
            }
            other => panic!("expected BackendUnavailable, got {other:?}"),
        }
        handle.join().unwrap();
    }

    #[test]
    fn truncated_response_carries_partial_text() {
        let (base_url, handle) = stub_server(vec![(200, ok_body("partial out", "length"))]);
        let backend =
            HttpBackend::new(BackendConfig { base_url, backoff_ms: 1, ..BackendConfig::default() })
                .unwrap();
        match backend.complete(&CompletionRequest::new("ping")) {
            Err(Error::ResponseTruncated { text }) => assert_eq!(text, "partial out"),
            other => panic!("expected ResponseTruncated, got {other:?}"),
        }
        handle.join().unwrap();
    }

    #[test]
    fn client_error_is_fatal_without_retry() {
        let (base_url, handle) = stub_server(vec![(404, "nope".to_string())]);
        let backend = HttpBackend::new(BackendConfig {
            base_url,
            max_retries: 5,
            backoff_ms: 1,
            ..BackendConfig::default()
        })
        .unwrap();
        assert!(matches!(
            backend.complete(&CompletionRequest::new("ping")),
            Err(Error::BackendUnavailable { .. })
        ));
        // server scripted exactly one response; a retry would hang the test
        assert_eq!(handle.join().unwrap(), 1);
    }
}
