//! OpenAI-compatible `chat/completions` and `completions` endpoints.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use super::{BackendError, BackendKind, BackendProfile, Completion, CompletionRequest, Driver, FinishReason};

/// Raw HTTP POST of a JSON body. Returns the status code and response body.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<(u16, String), BackendError>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpTransport { agent }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(120))
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<(u16, String), BackendError> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(token) = bearer {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let payload = serde_json::to_string(body).map_err(|e| BackendError::Malformed(e.to_string()))?;
        let mut resp = req.send(payload).map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok((status, text))
    }
}

pub struct RemoteDriver {
    transport: Arc<dyn Transport>,
    api_key: Option<String>,
}

impl RemoteDriver {
    pub fn new(transport: Arc<dyn Transport>, api_key: Option<String>) -> Self {
        RemoteDriver { transport, api_key }
    }

    /// Reads the token from the profile's configured environment variable.
    pub fn from_env(profile: &BackendProfile, transport: Arc<dyn Transport>) -> Self {
        let key = std::env::var(&profile.api_key_env).ok().filter(|k| !k.is_empty());
        Self::new(transport, key)
    }
}

pub fn endpoint_url(profile: &BackendProfile) -> Result<String, BackendError> {
    let base = profile
        .endpoint
        .as_deref()
        .ok_or_else(|| BackendError::InvalidProfile("missing endpoint".into()))?
        .trim_end_matches('/');
    Ok(match profile.kind {
        BackendKind::Chat => format!("{base}/chat/completions"),
        _ => format!("{base}/completions"),
    })
}

pub fn request_body(profile: &BackendProfile, req: &CompletionRequest) -> Value {
    let mut body = match req {
        CompletionRequest::Chat { messages } => json!({ "model": profile.model_id, "messages": messages }),
        CompletionRequest::Text { prompt } => json!({ "model": profile.model_id, "prompt": prompt }),
    };
    body["temperature"] = json!(profile.temperature);
    body["max_tokens"] = json!(profile.max_output_tokens);
    body
}

pub fn parse_response(kind: BackendKind, body: &str) -> Result<Completion, BackendError> {
    let v: Value = serde_json::from_str(body).map_err(|e| BackendError::Malformed(e.to_string()))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Malformed("response has no choices".into()))?;
    let text = match kind {
        BackendKind::Chat => choice.pointer("/message/content"),
        _ => choice.get("text"),
    }
    .and_then(Value::as_str)
    .ok_or_else(|| BackendError::Malformed("choice has no text content".into()))?;
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("stop") | None => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        Some(_) => FinishReason::Error,
    };
    let mut provider_metadata = BTreeMap::new();
    for key in ["id", "model", "system_fingerprint"] {
        if let Some(s) = v.get(key).and_then(Value::as_str) {
            provider_metadata.insert(key.to_string(), s.to_string());
        }
    }
    if let Some(usage) = v.get("usage").and_then(Value::as_object) {
        for (k, val) in usage {
            provider_metadata.insert(format!("usage.{k}"), val.to_string());
        }
    }
    Ok(Completion { text: text.to_string(), finish_reason, provider_metadata })
}

impl Driver for RemoteDriver {
    fn call(&self, profile: &BackendProfile, req: &CompletionRequest) -> Result<Completion, BackendError> {
        let url = endpoint_url(profile)?;
        let body = request_body(profile, req);
        let (status, text) = self.transport.post_json(&url, self.api_key.as_deref(), &body)?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Http { status, body: text });
        }
        parse_response(profile.kind, &text)
    }
}
