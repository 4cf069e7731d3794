//! Completion backends.
//!
//! A [`Backend`] pairs a [`BackendProfile`] with a [`Driver`] that actually
//! produces text. Four drivers exist: OpenAI-compatible chat and
//! text-completion endpoints ([`remote`]), fixture replay ([`scripted`]) and
//! seeded simulated agents ([`synthetic`]). Every call goes through the
//! request cache first, is retried on transient failure, and is bounded by
//! the profile's in-flight limit.

pub mod cache;
pub mod remote;
pub mod scripted;
pub mod synthetic;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheRecord, RequestCache};

/// Chooses the driver for a profile; lets callers instrument or replace transports.
pub type DriverFactory<'a> = dyn Fn(&BackendProfile) -> Result<Arc<dyn Driver>, BackendError> + 'a;
pub use remote::{HttpTransport, RemoteDriver, Transport};
pub use scripted::{ScriptRule, ScriptedDriver};
pub use synthetic::{synthetic_turn, AgentParams, SyntheticDriver};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid backend profile: {0}")]
    InvalidProfile(String),
    #[error("request shape does not match backend kind {kind:?}: {reason}")]
    ShapeMismatch { kind: BackendKind, reason: String },
    #[error("http {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed provider payload: {0}")]
    Malformed(String),
    #[error("replay-only mode: no cached completion for request {hash}")]
    CacheMiss { hash: String },
    #[error("no scripted reply matches request {hash}")]
    NoScriptMatch { hash: String },
    #[error("synthetic agent cannot interpret request: {0}")]
    Synthetic(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted {
        attempts: u32,
        #[source]
        last: Box<BackendError>,
    },
}

impl BackendError {
    /// Worth retrying: rate limiting, server errors and transport failures.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Http { status, .. } => *status == 429 || *status >= 500,
            BackendError::Transport(_) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Chat,
    TextCompletion,
    Scripted,
    Synthetic,
}

impl BackendKind {
    pub fn is_remote(self) -> bool {
        matches!(self, BackendKind::Chat | BackendKind::TextCompletion)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub multiplier: f64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff_ms: 1000,
            multiplier: 2.0,
            max_backoff_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based: the delay after the first failure).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = self.multiplier.max(1.0).powi(attempt.saturating_sub(1) as i32);
        let ms = (self.initial_backoff_ms as f64 * factor).min(self.max_backoff_ms as f64);
        Duration::from_millis(ms as u64)
    }
}

fn default_temperature() -> f64 {
    0.0
}
fn default_max_output_tokens() -> u32 {
    512
}
fn default_rate_limit() -> usize {
    4
}
fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendProfile {
    pub kind: BackendKind,
    /// Base URL of an OpenAI-compatible API, e.g. `https://api.openai.com/v1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_id: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Maximum concurrent in-flight requests through this backend.
    #[serde(default = "default_rate_limit")]
    pub rate_limit: usize,
    /// Name of the environment variable holding the bearer token.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    /// Reply fixture for scripted backends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
    /// Parameters of a synthetic agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<AgentParams>,
}

impl BackendProfile {
    pub fn new(kind: BackendKind, model_id: impl Into<String>) -> Self {
        BackendProfile {
            kind,
            endpoint: None,
            model_id: model_id.into(),
            temperature: default_temperature(),
            max_output_tokens: default_max_output_tokens(),
            retry: RetryPolicy::default(),
            rate_limit: default_rate_limit(),
            api_key_env: default_api_key_env(),
            fixture: None,
            agent: None,
        }
    }

    pub fn scripted(model_id: impl Into<String>) -> Self {
        Self::new(BackendKind::Scripted, model_id)
    }

    pub fn synthetic(model_id: impl Into<String>, params: AgentParams) -> Self {
        let mut p = Self::new(BackendKind::Synthetic, model_id);
        p.agent = Some(params);
        p
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: &str| Err(BackendError::InvalidProfile(format!("{}: {m}", self.model_id)));
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return bad("temperature must be >= 0");
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens must be > 0");
        }
        if self.rate_limit == 0 {
            return bad("rate_limit must be > 0");
        }
        if self.retry.max_attempts == 0 {
            return bad("retry.max_attempts must be > 0");
        }
        if self.model_id.is_empty() {
            return bad("model_id is required");
        }
        if self.kind.is_remote() && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return bad("remote backends require an endpoint");
        }
        if self.kind == BackendKind::Synthetic {
            match &self.agent {
                Some(a) => a.validate().map_err(BackendError::InvalidProfile)?,
                None => return bad("synthetic backends require agent parameters"),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum CompletionRequest {
    Chat { messages: Vec<Message> },
    Text { prompt: String },
}

impl CompletionRequest {
    pub fn is_chat(&self) -> bool {
        matches!(self, CompletionRequest::Chat { .. })
    }

    pub fn check_shape(&self, kind: BackendKind) -> Result<(), BackendError> {
        let mismatch = |reason: &str| {
            Err(BackendError::ShapeMismatch { kind, reason: reason.into() })
        };
        match (self, kind) {
            (CompletionRequest::Text { .. }, BackendKind::Chat) => mismatch("chat backend needs messages"),
            (CompletionRequest::Chat { .. }, BackendKind::TextCompletion) => {
                mismatch("text-completion backend needs a prompt")
            }
            (CompletionRequest::Chat { messages }, _) => match messages.last() {
                None => mismatch("chat request has no messages"),
                Some(m) if m.role != Role::User => mismatch("final chat message must come from the user"),
                _ => Ok(()),
            },
            (CompletionRequest::Text { .. }, _) => Ok(()),
        }
    }

    /// The full text a model would read, used by fixture matching.
    pub fn flat_text(&self) -> String {
        match self {
            CompletionRequest::Text { prompt } => prompt.clone(),
            CompletionRequest::Chat { messages } => messages
                .iter()
                .map(|m| m.content.as_str())
                .collect::<Vec<_>>()
                .join("\n"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub finish_reason: FinishReason,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provider_metadata: BTreeMap<String, String>,
}

impl Completion {
    pub fn stop(text: impl Into<String>) -> Self {
        Completion {
            text: text.into(),
            finish_reason: FinishReason::Stop,
            provider_metadata: BTreeMap::new(),
        }
    }
}

/// Serializes a JSON value with object keys sorted at every level.
pub fn canonical_json(value: &Value) -> String {
    fn write(v: &Value, out: &mut String) {
        match v {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                out.push('{');
                for (i, k) in keys.into_iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&Value::String(k.clone()).to_string());
                    out.push(':');
                    write(&map[k], out);
                }
                out.push('}');
            }
            Value::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(item, out);
                }
                out.push(']');
            }
            other => out.push_str(&other.to_string()),
        }
    }
    let mut out = String::new();
    write(value, &mut out);
    out
}

/// Stable SHA-256 over the kind, model, decoding settings and full content.
/// Synthetic agent parameters are part of the decoding settings.
pub fn canonical_request_hash(req: &CompletionRequest, profile: &BackendProfile) -> String {
    let mut settings = json!({
        "kind": profile.kind,
        "model_id": profile.model_id,
        "temperature": profile.temperature,
        "max_output_tokens": profile.max_output_tokens,
    });
    if let (BackendKind::Synthetic, Some(agent)) = (profile.kind, &profile.agent) {
        settings["agent"] = serde_json::to_value(agent).expect("agent params serialize");
    }
    let doc = json!({
        "settings": settings,
        "request": serde_json::to_value(req).expect("request serializes"),
    });
    hex::encode(Sha256::digest(canonical_json(&doc).as_bytes()))
}

/// Produces completions for one backend kind. Implementations must be pure
/// with respect to the request for replay to be meaningful.
pub trait Driver: Send + Sync {
    fn call(&self, profile: &BackendProfile, req: &CompletionRequest) -> Result<Completion, BackendError>;
}

/// Counting semaphore bounding in-flight driver calls.
#[derive(Debug)]
pub struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

pub struct LimiterGuard<'a>(&'a Limiter);

impl Limiter {
    pub fn new(max: usize) -> Self {
        Limiter {
            max: max.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> LimiterGuard<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.max {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        LimiterGuard(self)
    }
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub completion: Completion,
    pub request_hash: String,
    /// Unix milliseconds at which the completion was first obtained.
    pub recorded_at: u64,
    pub from_cache: bool,
}

/// A profile bound to its driver, cache and limiter.
#[derive(Clone)]
pub struct Backend {
    profile: BackendProfile,
    driver: Arc<dyn Driver>,
    cache: Arc<RequestCache>,
    limiter: Arc<Limiter>,
    replay_only: bool,
}

impl Backend {
    pub fn new(
        profile: BackendProfile,
        driver: Arc<dyn Driver>,
        cache: Arc<RequestCache>,
    ) -> Result<Self, BackendError> {
        profile.validate()?;
        let limiter = Arc::new(Limiter::new(profile.rate_limit));
        Ok(Backend { profile, driver, cache, limiter, replay_only: false })
    }

    /// Serve only from the cache; a miss is an error.
    pub fn replay_only(mut self, on: bool) -> Self {
        self.replay_only = on;
        self
    }

    pub fn profile(&self) -> &BackendProfile {
        &self.profile
    }

    pub fn cache(&self) -> &Arc<RequestCache> {
        &self.cache
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<Response, BackendError> {
        req.check_shape(self.profile.kind)?;
        let hash = canonical_request_hash(req, &self.profile);
        if let Some(rec) = self.cache.get(&hash) {
            return Ok(Response {
                completion: rec.completion,
                request_hash: hash,
                recorded_at: rec.timestamp,
                from_cache: true,
            });
        }
        if self.replay_only {
            return Err(BackendError::CacheMiss { hash });
        }
        let mut completion = self.call_with_retries(req)?;
        let trimmed = completion.text.trim_end().len();
        completion.text.truncate(trimmed);
        if completion.finish_reason == FinishReason::Stop && completion.text.is_empty() {
            return Err(BackendError::Malformed("empty completion with finish_reason stop".into()));
        }
        let record = CacheRecord::new(hash.clone(), &self.profile, req.clone(), completion);
        let record = self.cache.insert(record)?;
        Ok(Response {
            completion: record.completion,
            request_hash: hash,
            recorded_at: record.timestamp,
            from_cache: false,
        })
    }

    fn call_with_retries(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        let policy = &self.profile.retry;
        let mut attempt = 1;
        loop {
            let result = {
                let _slot = self.limiter.acquire();
                self.driver.call(&self.profile, req)
            };
            match result {
                Ok(c) => return Ok(c),
                Err(e) if e.is_transient() && attempt < policy.max_attempts => {
                    std::thread::sleep(policy.backoff(attempt));
                    attempt += 1;
                }
                Err(e) if e.is_transient() => {
                    return Err(BackendError::RetriesExhausted { attempts: attempt, last: Box::new(e) })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn chat(text: &str) -> CompletionRequest {
        CompletionRequest::Chat { messages: vec![Message::user(text)] }
    }

    #[test]
    fn hash_is_deterministic_and_sensitive() {
        let p = BackendProfile::scripted("m");
        let a = canonical_request_hash(&chat("hello"), &p);
        assert_eq!(a, canonical_request_hash(&chat("hello"), &p));
        assert_eq!(a.len(), 64);

        let mut hot = p.clone();
        hot.temperature = 0.7;
        assert_ne!(a, canonical_request_hash(&chat("hello"), &hot));
        assert_ne!(a, canonical_request_hash(&chat("hello "), &p));
        assert_ne!(a, canonical_request_hash(&chat("hello"), &BackendProfile::scripted("n")));
        let text = CompletionRequest::Text { prompt: "hello".into() };
        assert_ne!(a, canonical_request_hash(&text, &p));
    }

    #[test]
    fn hash_ignores_serialized_field_order() {
        let v1: Value = serde_json::from_str(r#"{"b":1,"a":{"d":[1,2],"c":"x"}}"#).unwrap();
        let v2: Value = serde_json::from_str(r#"{"a":{"c":"x","d":[1,2]},"b":1}"#).unwrap();
        assert_eq!(canonical_json(&v1), canonical_json(&v2));
        assert_eq!(canonical_json(&v1), r#"{"a":{"c":"x","d":[1,2]},"b":1}"#);
    }

    #[test]
    fn pinned_hash_value() {
        // Regression pin: the hash must not drift across releases or platforms.
        let p = BackendProfile::new(BackendKind::Chat, "gpt-3.5-turbo");
        let h = canonical_request_hash(&chat("Question: ping"), &p);
        let doc = r#"{"request":{"messages":[{"content":"Question: ping","role":"user"}],"shape":"chat"},"settings":{"kind":"chat","max_output_tokens":512,"model_id":"gpt-3.5-turbo","temperature":0.0}}"#;
        assert_eq!(h, hex::encode(Sha256::digest(doc.as_bytes())));
    }

    #[test]
    fn shape_checks() {
        let text = CompletionRequest::Text { prompt: "p".into() };
        assert!(text.check_shape(BackendKind::Chat).is_err());
        assert!(chat("x").check_shape(BackendKind::TextCompletion).is_err());
        let empty = CompletionRequest::Chat { messages: vec![] };
        assert!(empty.check_shape(BackendKind::Scripted).is_err());
        let system_only = CompletionRequest::Chat { messages: vec![Message::system("s")] };
        assert!(system_only.check_shape(BackendKind::Chat).is_err());
        assert!(chat("x").check_shape(BackendKind::Chat).is_ok());
        assert!(text.check_shape(BackendKind::Synthetic).is_ok());
    }

    #[test]
    fn profile_validation() {
        let mut p = BackendProfile::new(BackendKind::Chat, "gpt");
        assert!(p.validate().is_err(), "endpoint required");
        p.endpoint = Some("http://localhost:1".into());
        assert!(p.validate().is_ok());
        p.temperature = -0.1;
        assert!(p.validate().is_err());
        p.temperature = 0.0;
        p.max_output_tokens = 0;
        assert!(p.validate().is_err());
        assert!(BackendProfile::new(BackendKind::Synthetic, "s").validate().is_err());
    }

    #[test]
    fn backoff_schedule_is_exponential_and_capped() {
        let r = RetryPolicy { max_attempts: 5, initial_backoff_ms: 100, multiplier: 2.0, max_backoff_ms: 350 };
        assert_eq!(r.backoff(1), Duration::from_millis(100));
        assert_eq!(r.backoff(2), Duration::from_millis(200));
        assert_eq!(r.backoff(3), Duration::from_millis(350));
    }

    struct Flaky {
        failures_left: AtomicUsize,
        calls: AtomicUsize,
        status: u16,
    }

    impl Driver for Flaky {
        fn call(&self, _: &BackendProfile, _: &CompletionRequest) -> Result<Completion, BackendError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self
                .failures_left
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
                .is_ok()
            {
                return Err(BackendError::Http { status: self.status, body: "busy".into() });
            }
            Ok(Completion::stop("Answer: (A) is more plausible.  \n"))
        }
    }

    fn flaky_backend(failures: usize, status: u16, attempts: u32) -> (Backend, Arc<Flaky>) {
        let driver = Arc::new(Flaky { failures_left: AtomicUsize::new(failures), calls: AtomicUsize::new(0), status });
        let mut profile = BackendProfile::scripted("flaky");
        profile.retry = RetryPolicy { max_attempts: attempts, initial_backoff_ms: 0, multiplier: 2.0, max_backoff_ms: 0 };
        let backend = Backend::new(profile, driver.clone(), Arc::new(RequestCache::in_memory())).unwrap();
        (backend, driver)
    }

    #[test]
    fn transient_failures_are_retried_then_cached() {
        let (backend, driver) = flaky_backend(2, 503, 3);
        let r = backend.complete(&chat("q")).unwrap();
        assert_eq!(r.completion.text, "Answer: (A) is more plausible.");
        assert!(!r.from_cache);
        assert_eq!(driver.calls.load(Ordering::SeqCst), 3);
        let again = backend.complete(&chat("q")).unwrap();
        assert!(again.from_cache);
        assert_eq!(again.recorded_at, r.recorded_at);
        assert_eq!(driver.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn retries_exhaust_and_client_errors_fail_fast() {
        let (backend, driver) = flaky_backend(5, 429, 3);
        let err = backend.complete(&chat("q")).unwrap_err();
        assert!(matches!(err, BackendError::RetriesExhausted { attempts: 3, .. }), "{err}");
        assert_eq!(driver.calls.load(Ordering::SeqCst), 3);

        let (backend, driver) = flaky_backend(5, 400, 3);
        assert!(matches!(backend.complete(&chat("q")).unwrap_err(), BackendError::Http { status: 400, .. }));
        assert_eq!(driver.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn replay_only_misses_are_errors() {
        let (backend, driver) = flaky_backend(0, 500, 1);
        let backend = backend.replay_only(true);
        assert!(matches!(backend.complete(&chat("q")).unwrap_err(), BackendError::CacheMiss { .. }));
        assert_eq!(driver.calls.load(Ordering::SeqCst), 0);
    }
}
