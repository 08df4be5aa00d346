//! Chat-completion transports: live HTTP, recording, and offline replay.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;

/// Environment variable holding the endpoint key for [`HttpTransport`].
pub const API_KEY_ENV: &str = "SCREEN_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub prompt: String,
    /// Temperature actually sent to the endpoint.
    pub temperature: f64,
    pub max_new_tokens: u32,
}

impl ChatRequest {
    /// Hash of the prompt text and temperature; the replay lookup key.
    pub fn fingerprint(&self) -> String {
        fingerprint(&self.prompt, self.temperature)
    }
}

pub fn fingerprint(prompt: &str, temperature: f64) -> String {
    let prompt_hash = sha256_hex(prompt);
    sha256_hex(format!("{prompt_hash}:{temperature:?}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub latency_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    /// The endpoint cannot be reached at all; a run aborts once retries are exhausted.
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    /// A single request failed; after retries the item is recorded as a fallback decision.
    #[error("request failed: {0}")]
    Request(String),
    #[error("replay miss for fingerprint {0}")]
    ReplayMiss(String),
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        !matches!(self, TransportError::ReplayMiss(_))
    }

    /// Whether this error, once retries are exhausted, ends the whole run.
    pub fn aborts_run(&self) -> bool {
        !matches!(self, TransportError::Request(_))
    }
}

pub trait Transport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, TransportError>;

    /// Stable description of the endpoint, stored in the run ledger.
    fn identity(&self) -> String;
}

impl<T: Transport + ?Sized> Transport for &T {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, TransportError> {
        (**self).complete(request)
    }

    fn identity(&self) -> String {
        (**self).identity()
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, TransportError> {
        (**self).complete(request)
    }

    fn identity(&self) -> String {
        (**self).identity()
    }
}

/// OpenAI-compatible `/chat/completions` client.
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    model: String,
    api_key: Option<String>,
}

impl HttpTransport {
    /// `endpoint` is the full chat-completions URL. The key, if any, is read from
    /// [`API_KEY_ENV`].
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            url: endpoint.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        }
    }

    pub fn request_body(&self, request: &ChatRequest) -> serde_json::Value {
        serde_json::json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": request.prompt }],
            "temperature": request.temperature,
            "max_tokens": request.max_new_tokens,
            "stream": false,
        })
    }
}

/// Pulls `choices[0].message.content` (or legacy `choices[0].text`) from a response body.
pub fn extract_completion_text(body: &serde_json::Value) -> Option<String> {
    let choice = body.get("choices")?.get(0)?;
    choice
        .get("message")
        .and_then(|m| m.get("content"))
        .or_else(|| choice.get("text"))
        .map(|c| match c {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Null => String::new(),
            other => other.to_string(),
        })
}

impl Transport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, TransportError> {
        let start = Instant::now();
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(self.request_body(request)).map_err(|e| match e {
            ureq::Error::HostNotFound | ureq::Error::ConnectionFailed | ureq::Error::Io(_) => {
                TransportError::Unreachable(e.to_string())
            }
            other => TransportError::Request(other.to_string()),
        })?;
        let status = resp.status();
        if !status.is_success() {
            let detail = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(TransportError::Request(format!("HTTP {status}: {}", detail.trim())));
        }
        let body: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| TransportError::Request(format!("invalid response body: {e}")))?;
        let text = extract_completion_text(&body)
            .ok_or_else(|| TransportError::Request("response has no choices[0] content".into()))?;
        Ok(Completion {
            text,
            latency_secs: start.elapsed().as_secs_f64(),
        })
    }

    fn identity(&self) -> String {
        format!("{} model={}", self.url, self.model)
    }
}

/// One stored request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportRecord {
    pub fingerprint: String,
    pub prompt_sha256: String,
    pub temperature: f64,
    pub response: String,
    pub latency_secs: f64,
}

impl TransportRecord {
    pub fn new(request: &ChatRequest, response: impl Into<String>, latency_secs: f64) -> Self {
        Self {
            fingerprint: request.fingerprint(),
            prompt_sha256: sha256_hex(&request.prompt),
            temperature: request.temperature,
            response: response.into(),
            latency_secs,
        }
    }
}

pub fn read_transport_records(path: &Path) -> io::Result<Vec<TransportRecord>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(
                io::ErrorKind::InvalidData,
                format!("{} line {}: {e}", path.display(), i + 1),
            )
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_transport_records(path: &Path, records: &[TransportRecord]) -> io::Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out)
}

/// Serves stored responses by fingerprint and never touches the network.
#[derive(Debug, Default)]
pub struct ReplayTransport {
    source: Option<PathBuf>,
    records: HashMap<String, TransportRecord>,
}

impl ReplayTransport {
    pub fn from_records(records: impl IntoIterator<Item = TransportRecord>) -> Self {
        Self {
            source: None,
            records: records.into_iter().map(|r| (r.fingerprint.clone(), r)).collect(),
        }
    }

    /// A missing file yields an empty store, so every lookup is a replay miss.
    pub fn open(path: &Path) -> io::Result<Self> {
        let records = if path.exists() {
            read_transport_records(path)?
        } else {
            log::warn!("replay file {} does not exist", path.display());
            Vec::new()
        };
        let mut t = Self::from_records(records);
        t.source = Some(path.to_path_buf());
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Transport for ReplayTransport {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, TransportError> {
        let fp = request.fingerprint();
        self.records
            .get(&fp)
            .map(|r| Completion {
                text: r.response.clone(),
                latency_secs: r.latency_secs,
            })
            .ok_or(TransportError::ReplayMiss(fp))
    }

    fn identity(&self) -> String {
        match &self.source {
            Some(p) => format!(
                "replay:{}",
                p.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
            ),
            None => "replay:memory".into(),
        }
    }
}

/// Forwards to an inner transport and appends every successful exchange to a file.
pub struct RecordingTransport<T> {
    inner: T,
    sink: Mutex<File>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T, path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            inner,
            sink: Mutex::new(file),
        })
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, TransportError> {
        let completion = self.inner.complete(request)?;
        let record = TransportRecord::new(request, completion.text.clone(), completion.latency_secs);
        let mut line = serde_json::to_string(&record).expect("record serializes");
        line.push('\n');
        let mut sink = self.sink.lock().unwrap_or_else(|p| p.into_inner());
        if let Err(e) = sink.write_all(line.as_bytes()).and_then(|_| sink.flush()) {
            log::error!("failed to append transport record: {e}");
        }
        Ok(completion)
    }

    fn identity(&self) -> String {
        self.inner.identity()
    }
}
