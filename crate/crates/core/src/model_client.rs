//! Querying a chat-completions endpoint and recording answers.
//!
//! Each question is sent with its image embedded as a base64 data URL and a
//! fixed instruction suffix. [`run_batch`] appends one [`ResponseRecord`]
//! per pair to a JSONL file and, when rerun, skips pairs already answered
//! by the same model, so an interrupted run can simply be restarted.

use std::collections::HashSet;
use std::fs::{File, OpenOptions, TryLockError};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use base64::Engine as _;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::qa_gen::{QaPair, QuestionKind};

pub const YES_NO_SUFFIX: &str = "Answer with yes or no.";
pub const WH_SUFFIX: &str = "Answer in three words or fewer.";

const IMAGE_EXTENSIONS: &[&str] = &["jpg", "jpeg", "png", "webp", "gif"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Either the API root (`/chat/completions` is appended) or the full URL.
    pub base_url: String,
    pub model_name: String,
    /// Environment variable holding the bearer token, if the endpoint needs one.
    pub api_key_env: Option<String>,
    pub timeout_secs: f64,
    pub max_concurrency: usize,
    pub max_retries: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff_base_ms: u64,
    pub yes_no_suffix: String,
    pub wh_suffix: String,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: String::new(),
            model_name: String::new(),
            api_key_env: None,
            timeout_secs: 60.0,
            max_concurrency: 4,
            max_retries: 3,
            backoff_base_ms: 1000,
            yes_no_suffix: YES_NO_SUFFIX.into(),
            wh_suffix: WH_SUFFIX.into(),
        }
    }
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model_name: model_name.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        let bad = |m: &str| Err(ClientError::InvalidConfig(m.into()));
        if self.max_concurrency == 0 {
            return bad("max_concurrency must be at least 1");
        }
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return bad("timeout must be positive");
        }
        if self.model_name.is_empty() {
            return bad("model name is empty");
        }
        Ok(())
    }

    pub fn url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }

    pub fn suffix(&self, kind: QuestionKind) -> &str {
        match kind {
            QuestionKind::YesNo => &self.yes_no_suffix,
            QuestionKind::Wh => &self.wh_suffix,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub pair_id: String,
    pub model_name: String,
    #[serde(default)]
    pub raw_text: String,
    pub latency_ms: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ResponseRecord {
    pub fn answered(pair_id: &str, model: &str, text: impl Into<String>, latency_ms: u64) -> Self {
        ResponseRecord {
            pair_id: pair_id.into(),
            model_name: model.into(),
            raw_text: text.into(),
            latency_ms,
            timestamp: Utc::now(),
            error: None,
        }
    }

    pub fn failed(pair_id: &str, model: &str, error: impl Into<String>, latency_ms: u64) -> Self {
        ResponseRecord {
            pair_id: pair_id.into(),
            model_name: model.into(),
            raw_text: String::new(),
            latency_ms,
            timestamp: Utc::now(),
            error: Some(error.into()),
        }
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid endpoint config: {0}")]
    InvalidConfig(String),
    #[error("cannot read image {path}: {source}")]
    ImageRead {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no image for {0} (tried {exts})", exts = IMAGE_EXTENSIONS.join(", "))]
    ImageNotFound(String),
    #[error("endpoint rejected credentials: {0}")]
    Auth(String),
    #[error("request failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
}

/// What a transport reports when a request does not produce text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SendError {
    Auth(String),
    /// Worth retrying: timeouts, connection failures, 429 and 5xx.
    Transient(String),
    Permanent(String),
}

/// Carries one request payload to the model and returns its text answer.
pub trait Transport: Sync {
    fn send(&self, payload: &Value) -> Result<String, SendError>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    /// Reads the API key from the configured environment variable.
    pub fn new(cfg: &EndpointConfig) -> Result<Self, ClientError> {
        cfg.validate()?;
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                ClientError::Auth(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| ClientError::InvalidConfig(e.to_string()))?;
        Ok(HttpTransport {
            client,
            url: cfg.url(),
            api_key,
        })
    }
}

/// Pulls the first completion's text out of a chat-completions reply.
pub fn completion_text(reply: &Value) -> Option<String> {
    let content = reply.pointer("/choices/0/message/content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        // some gateways answer with content parts
        Value::Array(parts) => {
            let text: Vec<&str> = parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect();
            (!text.is_empty()).then(|| text.join(""))
        }
        _ => None,
    }
}

impl Transport for HttpTransport {
    fn send(&self, payload: &Value) -> Result<String, SendError> {
        let mut req = self.client.post(&self.url).json(payload);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| SendError::Transient(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(SendError::Auth(status.to_string()));
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(SendError::Transient(status.to_string()));
        }
        if !status.is_success() {
            return Err(SendError::Permanent(status.to_string()));
        }
        let body: Value = resp
            .json()
            .map_err(|e| SendError::Transient(format!("bad reply body: {e}")))?;
        completion_text(&body).ok_or_else(|| SendError::Permanent("reply has no completion text".into()))
    }
}

/// Locates `{image_id}.{ext}` (or `image_id` itself) under `dir`.
pub fn find_image(dir: &Path, image_id: &str) -> Option<PathBuf> {
    let exact = dir.join(image_id);
    if exact.is_file() {
        return Some(exact);
    }
    IMAGE_EXTENSIONS
        .iter()
        .map(|ext| dir.join(format!("{image_id}.{ext}")))
        .find(|p| p.is_file())
}

fn mime_type(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        _ => "image/jpeg",
    }
}

/// The prompt text: the question verbatim, a space, then the suffix.
pub fn prompt_text(cfg: &EndpointConfig, pair: &QaPair) -> String {
    format!("{} {}", pair.question, cfg.suffix(pair.kind))
}

pub fn build_payload(cfg: &EndpointConfig, pair: &QaPair, image: &[u8], mime: &str) -> Value {
    let data = base64::engine::general_purpose::STANDARD.encode(image);
    json!({
        "model": cfg.model_name,
        "temperature": 0,
        "messages": [{
            "role": "user",
            "content": [
                {"type": "text", "text": prompt_text(cfg, pair)},
                {"type": "image_url", "image_url": {"url": format!("data:{mime};base64,{data}")}},
            ],
        }],
    })
}

fn load_payload(cfg: &EndpointConfig, image_path: &Path, pair: &QaPair) -> Result<Value, ClientError> {
    let bytes = std::fs::read(image_path).map_err(|source| ClientError::ImageRead {
        path: image_path.to_path_buf(),
        source,
    })?;
    Ok(build_payload(cfg, pair, &bytes, mime_type(image_path)))
}

fn send_with_retries(
    cfg: &EndpointConfig,
    transport: &dyn Transport,
    payload: &Value,
) -> Result<String, ClientError> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        match transport.send(payload) {
            Ok(text) => return Ok(text),
            Err(SendError::Auth(m)) => return Err(ClientError::Auth(m)),
            Err(SendError::Permanent(message)) => {
                return Err(ClientError::Transport {
                    attempts: attempt,
                    message,
                })
            }
            Err(SendError::Transient(message)) => {
                if attempt > cfg.max_retries {
                    return Err(ClientError::Transport {
                        attempts: attempt,
                        message,
                    });
                }
                let delay = cfg.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(20));
                std::thread::sleep(Duration::from_millis(delay));
            }
        }
    }
}

pub fn query_one(
    cfg: &EndpointConfig,
    transport: &dyn Transport,
    image_path: &Path,
    pair: &QaPair,
) -> Result<ResponseRecord, ClientError> {
    let payload = load_payload(cfg, image_path, pair)?;
    let start = Instant::now();
    let text = send_with_retries(cfg, transport, &payload)?;
    Ok(ResponseRecord::answered(
        &pair.id,
        &cfg.model_name,
        text,
        start.elapsed().as_millis() as u64,
    ))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub completed: usize,
    pub failed: usize,
    pub skipped: usize,
    /// Pairs never attempted because the run was cancelled or aborted.
    pub not_attempted: usize,
    /// Torn lines and error records dropped from the output on resume.
    pub dropped_on_resume: usize,
    pub aborted: bool,
}

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("{0} is being written by another run")]
    OutputLocked(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Client(#[from] ClientError),
}

#[derive(Debug, Default, Clone)]
pub struct BatchOptions {
    /// Write request payloads here instead of sending them.
    pub dry_run: Option<PathBuf>,
    /// Checked before each request; set it to stop the run early.
    pub cancel: Option<std::sync::Arc<AtomicBool>>,
}

/// Reads a response file, keeping only well-formed answered records and the
/// first record for each (model, pair). Returns the records and how many
/// lines were dropped.
pub fn read_responses_lenient(text: &str) -> (Vec<ResponseRecord>, usize) {
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    let mut dropped = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str::<ResponseRecord>(line) {
            Ok(r) if r.error.is_none() => {
                if seen.insert((r.model_name.clone(), r.pair_id.clone())) {
                    kept.push(r);
                } else {
                    dropped += 1;
                }
            }
            _ => dropped += 1,
        }
    }
    (kept, dropped)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BatchError + '_ {
    move |source| BatchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn lock_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".lock");
    PathBuf::from(name)
}

/// Takes the output's lock file, failing if another run holds it.
fn lock_output(out: &Path) -> Result<File, BatchError> {
    let path = lock_path(out);
    let f = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&path)
        .map_err(io_err(&path))?;
    match f.try_lock() {
        Ok(()) => Ok(f),
        Err(TryLockError::WouldBlock) => Err(BatchError::OutputLocked(out.to_path_buf())),
        Err(TryLockError::Error(e)) => Err(io_err(&path)(e)),
    }
}

/// Rewrites `out` without torn lines, error records or duplicates and
/// returns the ids already answered by `model`.
fn compact(out: &Path, model: &str) -> Result<(HashSet<String>, usize), BatchError> {
    let text = match std::fs::read_to_string(out) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((HashSet::new(), 0)),
        Err(e) => return Err(io_err(out)(e)),
    };
    let (kept, dropped) = read_responses_lenient(&text);
    if dropped > 0 || (!text.is_empty() && !text.ends_with('\n')) {
        let mut tmp = out.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        std::fs::write(&tmp, crate::jsonl::to_jsonl(&kept)).map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, out).map_err(io_err(out))?;
    }
    let done = kept
        .into_iter()
        .filter(|r| r.model_name == model)
        .map(|r| r.pair_id)
        .collect();
    Ok((done, dropped))
}

enum Outcome {
    Record(ResponseRecord),
    DryRun,
}

/// Answers every pair not yet in `out`, with at most `max_concurrency`
/// requests in flight. Records are appended by a single writer as they
/// complete. Per-pair failures become error records, which the next run
/// drops and retries. An authentication failure stops the run.
pub fn run_batch(
    cfg: &EndpointConfig,
    transport: &dyn Transport,
    pairs: &[QaPair],
    image_dir: &Path,
    out: &Path,
    opts: &BatchOptions,
) -> Result<BatchSummary, BatchError> {
    cfg.validate()?;
    let mut summary = BatchSummary::default();

    let mut unique = HashSet::new();
    let pairs: Vec<&QaPair> = pairs.iter().filter(|p| unique.insert(p.id.as_str())).collect();

    let _lock;
    let mut sink = None;
    let mut done = HashSet::new();
    if let Some(dir) = &opts.dry_run {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    } else {
        _lock = lock_output(out)?;
        let (d, dropped) = compact(out, &cfg.model_name)?;
        done = d;
        summary.dropped_on_resume = dropped;
        sink = Some(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(out)
                .map_err(io_err(out))?,
        );
    }

    let todo: Vec<&QaPair> = pairs.iter().copied().filter(|p| !done.contains(&p.id)).collect();
    summary.skipped = pairs.len() - todo.len();

    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let stopped = || stop.load(Ordering::SeqCst) || opts.cancel.as_ref().is_some_and(|c| c.load(Ordering::SeqCst));
    let workers = cfg.max_concurrency.min(todo.len());
    let mut write_error = None;

    std::thread::scope(|s| {
        let (tx, rx) = mpsc::channel::<Outcome>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (todo, next, stop, stopped) = (&todo, &next, &stop, &stopped);
            s.spawn(move || loop {
                if stopped() {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(pair) = todo.get(i) else { break };
                let start = Instant::now();
                let failed = |e: &ClientError| {
                    ResponseRecord::failed(&pair.id, &cfg.model_name, e.to_string(), start.elapsed().as_millis() as u64)
                };
                let image = find_image(image_dir, &pair.image_id)
                    .ok_or_else(|| ClientError::ImageNotFound(pair.image_id.clone()));
                let payload = image.and_then(|path| load_payload(cfg, &path, pair));
                let outcome = match (&opts.dry_run, payload) {
                    (_, Err(e)) => Outcome::Record(failed(&e)),
                    (Some(dir), Ok(payload)) => {
                        let path = dir.join(format!("{}.json", pair.id));
                        match serde_json::to_vec_pretty(&payload)
                            .map_err(std::io::Error::other)
                            .and_then(|b| std::fs::write(&path, b))
                        {
                            Ok(()) => Outcome::DryRun,
                            Err(source) => Outcome::Record(failed(&ClientError::ImageRead { path, source })),
                        }
                    }
                    (None, Ok(payload)) => match send_with_retries(cfg, transport, &payload) {
                        Ok(text) => Outcome::Record(ResponseRecord::answered(
                            &pair.id,
                            &cfg.model_name,
                            text,
                            start.elapsed().as_millis() as u64,
                        )),
                        Err(e) => {
                            if matches!(e, ClientError::Auth(_)) {
                                stop.store(true, Ordering::SeqCst);
                            }
                            Outcome::Record(failed(&e))
                        }
                    },
                };
                if tx.send(outcome).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        for outcome in rx {
            match outcome {
                Outcome::DryRun => summary.completed += 1,
                Outcome::Record(r) => {
                    if r.error.is_some() {
                        summary.failed += 1;
                    } else {
                        summary.completed += 1;
                    }
                    let Some(f) = sink.as_mut() else { continue };
                    let mut line = serde_json::to_string(&r).expect("serializable record");
                    line.push('\n');
                    if let Err(e) = f.write_all(line.as_bytes()).and_then(|()| f.flush()) {
                        write_error.get_or_insert(e);
                        stop.store(true, Ordering::SeqCst);
                    }
                }
            }
        }
    });

    if let Some(e) = write_error {
        return Err(io_err(out)(e));
    }
    summary.aborted = stop.load(Ordering::SeqCst);
    summary.not_attempted = todo.len() - summary.completed - summary.failed;
    Ok(summary)
}
