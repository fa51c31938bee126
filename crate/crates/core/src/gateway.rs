//! Chat-completion transport with a content-addressed response cache.
//!
//! Every completion is keyed by a SHA-256 over a canonical JSON
//! serialization of `(model_id, system_prompt, user_prompt, temperature,
//! sample_ordinal)`. The ordinal makes the K samples of one prompt cache as
//! distinct entries. Entries are one JSON file each, stored as
//! `<cache_dir>/<key[..2]>/<key>.json`, so a replay run needs nothing but
//! the committed directory.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::mpc::SamplerError;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("no cached response for key {key} (replay-only mode)")]
    CacheMiss { key: String },
    #[error("malformed completion payload: {0}")]
    MalformedResponse(String),
    #[error("gateway not configured: {0}")]
    NotConfigured(String),
    #[error("all {count} completions failed; first error: {first}")]
    AllFailed { count: usize, first: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cache I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("cache entry is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<GatewayError> for SamplerError {
    fn from(e: GatewayError) -> Self {
        SamplerError(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

/// Model and decoding settings applied to rendered prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RequestSettings {
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for RequestSettings {
    fn default() -> Self {
        Self {
            model_id: "gpt-4o-mini".to_string(),
            temperature: 1.0,
            max_output_tokens: 2048,
        }
    }
}

impl ChatRequest {
    pub fn new(system_prompt: impl Into<String>, user_prompt: impl Into<String>, settings: &RequestSettings) -> Self {
        Self {
            model_id: settings.model_id.clone(),
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            temperature: settings.temperature,
            max_output_tokens: settings.max_output_tokens,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("prompts must be non-empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_output_tokens must be positive".into(),
            ));
        }
        Ok(())
    }

    /// OpenAI-style chat-completions body.
    pub fn to_wire_json(&self) -> serde_json::Value {
        serde_json::json!({
            "model": self.model_id,
            "messages": [
                {"role": "system", "content": self.system_prompt},
                {"role": "user", "content": self.user_prompt},
            ],
            "temperature": self.temperature,
            "max_tokens": self.max_output_tokens,
        })
    }
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    model_id: &'a str,
    system_prompt: &'a str,
    user_prompt: &'a str,
    temperature: f64,
    sample_ordinal: usize,
}

/// Hex SHA-256 of the canonical key material. Field order is fixed by
/// `KeyMaterial`; `max_output_tokens` is deliberately not part of the key.
pub fn cache_key(request: &ChatRequest, sample_ordinal: usize) -> String {
    let material = KeyMaterial {
        model_id: &request.model_id,
        system_prompt: &request.system_prompt,
        user_prompt: &request.user_prompt,
        temperature: request.temperature,
        sample_ordinal,
    };
    let canonical = serde_json::to_vec(&material).expect("key material serializes");
    hex::encode(Sha256::digest(&canonical))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub model_id: String,
    pub sample_ordinal: usize,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub response_text: String,
    /// Unix seconds.
    pub created_at: u64,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicUsize = AtomicUsize::new(0);

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        let shard = &key[..key.len().min(2)];
        self.dir.join(shard).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<CacheEntry>, GatewayError> {
        let path = self.path_for(key);
        match fs::read_to_string(&path) {
            Ok(body) => Ok(Some(serde_json::from_str(&body)?)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Write-temp-then-rename so concurrent readers never see partial files.
    pub fn put(&self, entry: &CacheEntry) -> Result<(), GatewayError> {
        let path = self.path_for(&entry.key);
        let parent = path.parent().expect("cache path has a shard directory");
        fs::create_dir_all(parent)?;
        let tmp = parent.join(format!(
            ".{}.{}.{}.tmp",
            entry.key,
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        fs::write(&tmp, serde_json::to_vec_pretty(entry)?)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    /// Number of stored entries.
    pub fn len(&self) -> usize {
        let Ok(shards) = fs::read_dir(&self.dir) else {
            return 0;
        };
        shards
            .flatten()
            .filter(|d| d.path().is_dir())
            .filter_map(|d| fs::read_dir(d.path()).ok())
            .flat_map(|files| files.flatten())
            .filter(|f| f.path().extension().is_some_and(|e| e == "json"))
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GatewayMode {
    /// Always call the endpoint; the cache is neither read nor written.
    Live,
    /// Serve only from the cache; a miss is an error.
    ReplayOnly,
    /// Serve from the cache, calling the endpoint and storing on a miss.
    LiveWithCache,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub retries: usize,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    /// Three retries after the first attempt, waiting 1 s, 2 s, 4 s.
    fn default() -> Self {
        Self {
            retries: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn no_wait(retries: usize) -> Self {
        Self {
            retries,
            initial_backoff: Duration::ZERO,
        }
    }

    pub fn backoff(&self, retry: usize) -> Duration {
        self.initial_backoff * (1u32 << retry.min(16))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message}")]
pub struct TransportError {
    pub message: String,
    pub retryable: bool,
}

/// Sends one chat request and returns the raw response body.
pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

/// Blocking HTTPS transport for chat-completions-compatible endpoints.
pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            endpoint: endpoint.into(),
            api_key,
        }
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let mut call = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call.send_json(request.to_wire_json()).map_err(|e| TransportError {
            message: e.to_string(),
            retryable: true,
        })?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(|e| TransportError {
            message: e.to_string(),
            retryable: true,
        })?;
        if (200..300).contains(&status) {
            Ok(body)
        } else {
            Err(TransportError {
                message: format!("HTTP {status}: {}", body.chars().take(300).collect::<String>()),
                retryable: status == 429 || status >= 500,
            })
        }
    }
}

/// Pull `choices[0].message.content` out of a chat-completions body.
pub fn extract_assistant_text(body: &str) -> Result<String, GatewayError> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_owned)
        .ok_or_else(|| GatewayError::MalformedResponse("missing choices[0].message.content".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub endpoint: String,
    pub timeout_secs: u64,
    pub mode: GatewayMode,
    pub cache_dir: Option<PathBuf>,
    /// Environment variable holding the API key.
    pub api_key_env: String,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            timeout_secs: 60,
            mode: GatewayMode::LiveWithCache,
            cache_dir: None,
            api_key_env: "LLMPC_API_KEY".to_string(),
        }
    }
}

/// Outcome of a K-sample batch. Texts are ordered by ordinal.
#[derive(Debug, Default)]
pub struct BatchOutcome {
    pub texts: Vec<String>,
    pub failures: Vec<(usize, GatewayError)>,
}

pub struct Gateway {
    mode: GatewayMode,
    transport: Option<Box<dyn Transport>>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    network_calls: AtomicUsize,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode)
            .field("cache", &self.cache)
            .field("has_transport", &self.transport.is_some())
            .finish()
    }
}

impl Gateway {
    /// Build from configuration, reading the API key from the environment
    /// when the mode needs the network.
    pub fn from_config(config: &GatewayConfig) -> Result<Self, GatewayError> {
        let cache = config.cache_dir.as_ref().map(ResponseCache::new);
        let transport: Option<Box<dyn Transport>> = match config.mode {
            GatewayMode::ReplayOnly => None,
            GatewayMode::Live | GatewayMode::LiveWithCache => {
                let key = std::env::var(&config.api_key_env).ok();
                if key.is_none() {
                    warn!(
                        "{} is not set; sending requests without credentials",
                        config.api_key_env
                    );
                }
                Some(Box::new(HttpTransport::new(
                    config.endpoint.clone(),
                    key,
                    Duration::from_secs(config.timeout_secs),
                )))
            }
        };
        Self::new(config.mode, transport, cache)
    }

    pub fn new(
        mode: GatewayMode,
        transport: Option<Box<dyn Transport>>,
        cache: Option<ResponseCache>,
    ) -> Result<Self, GatewayError> {
        match mode {
            GatewayMode::ReplayOnly | GatewayMode::LiveWithCache if cache.is_none() => {
                return Err(GatewayError::NotConfigured(format!(
                    "{mode:?} mode requires a cache directory"
                )));
            }
            GatewayMode::Live | GatewayMode::LiveWithCache if transport.is_none() => {
                return Err(GatewayError::NotConfigured(format!(
                    "{mode:?} mode requires a transport"
                )));
            }
            _ => {}
        }
        Ok(Self {
            mode,
            transport,
            cache,
            retry: RetryPolicy::default(),
            network_calls: AtomicUsize::new(0),
        })
    }

    /// Replay-only gateway over an existing cache directory.
    pub fn replay(cache_dir: impl Into<PathBuf>) -> Self {
        Self::new(GatewayMode::ReplayOnly, None, Some(ResponseCache::new(cache_dir)))
            .expect("replay mode with cache is valid")
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    /// Transport attempts made so far, including failed ones.
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    pub fn complete(&self, request: &ChatRequest, sample_ordinal: usize) -> Result<String, GatewayError> {
        request.validate()?;
        let key = cache_key(request, sample_ordinal);
        if self.mode != GatewayMode::Live {
            let cache = self.cache.as_ref().expect("validated at construction");
            if let Some(entry) = cache.get(&key)? {
                debug!("cache hit {key}");
                return Ok(entry.response_text);
            }
            if self.mode == GatewayMode::ReplayOnly {
                return Err(GatewayError::CacheMiss { key });
            }
        }

        let text = self.call_with_retries(request)?;
        if self.mode == GatewayMode::LiveWithCache {
            let created_at = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            self.cache.as_ref().expect("validated").put(&CacheEntry {
                key,
                model_id: request.model_id.clone(),
                sample_ordinal,
                system_prompt: request.system_prompt.clone(),
                user_prompt: request.user_prompt.clone(),
                temperature: request.temperature,
                response_text: text.clone(),
                created_at,
            })?;
        }
        Ok(text)
    }

    fn call_with_retries(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let transport = self.transport.as_ref().expect("validated at construction");
        let mut attempt = 0;
        loop {
            self.network_calls.fetch_add(1, Ordering::SeqCst);
            match transport.send(request) {
                Ok(body) => return extract_assistant_text(&body),
                Err(e) if e.retryable && attempt < self.retry.retries => {
                    let wait = self.retry.backoff(attempt);
                    warn!("transport error ({e}); retrying in {wait:?}");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Err(e) => {
                    return Err(GatewayError::Transport {
                        attempts: attempt + 1,
                        message: e.message,
                    })
                }
            }
        }
    }

    /// K completions of one request with ordinals `0..count`, issued
    /// concurrently. Fails only if every completion fails.
    pub fn batch_complete(&self, request: &ChatRequest, count: usize) -> Result<BatchOutcome, GatewayError> {
        self.batch_complete_from(request, 0, count)
    }

    /// Like `batch_complete` with ordinals `first..first + count`. Failure
    /// records carry absolute ordinals.
    pub fn batch_complete_from(
        &self,
        request: &ChatRequest,
        first: usize,
        count: usize,
    ) -> Result<BatchOutcome, GatewayError> {
        if count == 0 {
            return Err(GatewayError::InvalidRequest("count must be at least 1".into()));
        }
        let results: Vec<Result<String, GatewayError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (first..first + count)
                .map(|ordinal| scope.spawn(move || self.complete(request, ordinal)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("completion thread panicked"))
                .collect()
        });
        let mut outcome = BatchOutcome::default();
        for (ordinal, result) in (first..).zip(results) {
            match result {
                Ok(text) => outcome.texts.push(text),
                Err(e) => outcome.failures.push((ordinal, e)),
            }
        }
        if outcome.texts.is_empty() {
            let first = outcome.failures.first().map(|(_, e)| e.to_string()).unwrap_or_default();
            return Err(GatewayError::AllFailed { count, first });
        }
        for (ordinal, e) in &outcome.failures {
            warn!("sample {ordinal} failed: {e}");
        }
        Ok(outcome)
    }
}

/// Anything that can produce `count` completions for a request.
pub trait TextSampler {
    fn sample_texts(&mut self, request: &ChatRequest, count: usize) -> Result<Vec<String>, GatewayError>;

    /// Completions numbered from `first`, so that a repeated prompt in a
    /// later round does not hit the same cache entries.
    fn sample_texts_from(
        &mut self,
        request: &ChatRequest,
        first: usize,
        count: usize,
    ) -> Result<Vec<String>, GatewayError> {
        let _ = first;
        self.sample_texts(request, count)
    }
}

impl TextSampler for Gateway {
    fn sample_texts(&mut self, request: &ChatRequest, count: usize) -> Result<Vec<String>, GatewayError> {
        self.batch_complete(request, count).map(|o| o.texts)
    }

    fn sample_texts_from(
        &mut self,
        request: &ChatRequest,
        first: usize,
        count: usize,
    ) -> Result<Vec<String>, GatewayError> {
        self.batch_complete_from(request, first, count).map(|o| o.texts)
    }
}

impl TextSampler for &Gateway {
    fn sample_texts(&mut self, request: &ChatRequest, count: usize) -> Result<Vec<String>, GatewayError> {
        self.batch_complete(request, count).map(|o| o.texts)
    }

    fn sample_texts_from(
        &mut self,
        request: &ChatRequest,
        first: usize,
        count: usize,
    ) -> Result<Vec<String>, GatewayError> {
        self.batch_complete_from(request, first, count).map(|o| o.texts)
    }
}

impl<F> TextSampler for F
where
    F: FnMut(&ChatRequest, usize) -> Result<Vec<String>, GatewayError>,
{
    fn sample_texts(&mut self, request: &ChatRequest, count: usize) -> Result<Vec<String>, GatewayError> {
        self(request, count)
    }
}

/// Plays back a fixed list of replies in order, one per requested sample,
/// cycling when exhausted. Useful for recording fixtures and examples.
#[derive(Debug, Clone)]
pub struct ScriptedSampler {
    replies: Vec<String>,
    next: usize,
    pub requests: Vec<ChatRequest>,
}

impl ScriptedSampler {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            replies: replies.into_iter().map(Into::into).collect(),
            next: 0,
            requests: Vec::new(),
        }
    }
}

impl TextSampler for ScriptedSampler {
    fn sample_texts(&mut self, request: &ChatRequest, count: usize) -> Result<Vec<String>, GatewayError> {
        if self.replies.is_empty() {
            return Err(GatewayError::NotConfigured("scripted sampler has no replies".into()));
        }
        self.requests.push(request.clone());
        Ok((0..count)
            .map(|_| {
                let reply = self.replies[self.next % self.replies.len()].clone();
                self.next += 1;
                reply
            })
            .collect())
    }
}

/// Transport that answers from a script of chat-completions bodies.
/// Each reply is consumed once, in order; extra calls fail.
pub struct ScriptedTransport {
    replies: std::sync::Mutex<std::collections::VecDeque<Result<String, TransportError>>>,
}

impl ScriptedTransport {
    pub fn new(replies: impl IntoIterator<Item = Result<String, TransportError>>) -> Self {
        Self {
            replies: std::sync::Mutex::new(replies.into_iter().collect()),
        }
    }

    /// Wrap assistant texts into chat-completions response bodies.
    pub fn from_texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self::new(texts.into_iter().map(|t| Ok(completion_body(t.as_ref()))))
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, _request: &ChatRequest) -> Result<String, TransportError> {
        self.replies
            .lock()
            .expect("script lock")
            .pop_front()
            .unwrap_or_else(|| {
                Err(TransportError {
                    message: "script exhausted".into(),
                    retryable: false,
                })
            })
    }
}

/// Minimal chat-completions response body carrying `text`.
pub fn completion_body(text: &str) -> String {
    serde_json::json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]
    })
    .to_string()
}
