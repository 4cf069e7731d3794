//! Deterministic replies from a fixture.
//!
//! A fixture is a list of rules, one JSON object per line. A rule matches
//! either an exact request hash or a set of substrings that must all occur in
//! the request text. Hash rules win; substring rules are tried in file order.
//!
//! ```text
//! {"hash":"9f2c...","text":"Answer: (A) is more plausible. Explanation: ..."}
//! {"contains":["Do you think I am more reasonable?"],"text":"Answer: (B) is more plausible."}
//! ```

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{canonical_request_hash, BackendError, BackendProfile, Completion, CompletionRequest, Driver, FinishReason};

fn stop() -> FinishReason {
    FinishReason::Stop
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    pub text: String,
    #[serde(default = "stop")]
    pub finish_reason: FinishReason,
}

impl ScriptRule {
    pub fn by_hash(hash: impl Into<String>, text: impl Into<String>) -> Self {
        ScriptRule { hash: Some(hash.into()), contains: vec![], text: text.into(), finish_reason: FinishReason::Stop }
    }

    pub fn when_contains<S: Into<String>>(needles: impl IntoIterator<Item = S>, text: impl Into<String>) -> Self {
        ScriptRule {
            hash: None,
            contains: needles.into_iter().map(Into::into).collect(),
            text: text.into(),
            finish_reason: FinishReason::Stop,
        }
    }
}

#[derive(Debug, Default)]
pub struct ScriptedDriver {
    by_hash: HashMap<String, usize>,
    rules: Vec<ScriptRule>,
    calls: AtomicUsize,
}

impl ScriptedDriver {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        let mut by_hash = HashMap::new();
        for (i, r) in rules.iter().enumerate() {
            if let Some(h) = &r.hash {
                by_hash.entry(h.clone()).or_insert(i);
            }
        }
        ScriptedDriver { by_hash, rules, calls: AtomicUsize::new(0) }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::InvalidProfile(format!("fixture {}: {e}", path.display())))?;
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rule: ScriptRule = serde_json::from_str(line).map_err(|e| {
                BackendError::InvalidProfile(format!("fixture {} line {}: {e}", path.display(), i + 1))
            })?;
            if rule.hash.is_none() && rule.contains.is_empty() {
                return Err(BackendError::InvalidProfile(format!(
                    "fixture {} line {}: rule needs a hash or contains list",
                    path.display(),
                    i + 1
                )));
            }
            rules.push(rule);
        }
        Ok(Self::new(rules))
    }

    /// Number of requests that reached this driver, i.e. were not served from cache.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn find(&self, hash: &str, req: &CompletionRequest) -> Option<&ScriptRule> {
        if let Some(&i) = self.by_hash.get(hash) {
            return Some(&self.rules[i]);
        }
        let flat = req.flat_text();
        self.rules
            .iter()
            .find(|r| !r.contains.is_empty() && r.contains.iter().all(|n| flat.contains(n.as_str())))
    }
}

impl Driver for ScriptedDriver {
    fn call(&self, profile: &BackendProfile, req: &CompletionRequest) -> Result<Completion, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let hash = canonical_request_hash(req, profile);
        let rule = self.find(&hash, req).ok_or(BackendError::NoScriptMatch { hash })?;
        Ok(Completion {
            text: rule.text.clone(),
            finish_reason: rule.finish_reason,
            provider_metadata: Default::default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Message;

    #[test]
    fn hash_rules_take_precedence() {
        let profile = BackendProfile::scripted("s");
        let req = CompletionRequest::Chat { messages: vec![Message::user("Question: bubble wrap")] };
        let h = canonical_request_hash(&req, &profile);
        let driver = ScriptedDriver::new(vec![
            ScriptRule::when_contains(["bubble"], "Answer: (B) is more plausible."),
            ScriptRule::by_hash(h, "Answer: (A) is more plausible. Explanation: Bubble wrap protects fragile items."),
        ]);
        let c = driver.call(&profile, &req).unwrap();
        assert!(c.text.starts_with("Answer: (A)"));
        let other = CompletionRequest::Chat { messages: vec![Message::user("more bubble")] };
        assert_eq!(driver.call(&profile, &other).unwrap().text, "Answer: (B) is more plausible.");
        let none = CompletionRequest::Text { prompt: "nothing".into() };
        assert!(matches!(driver.call(&profile, &none), Err(BackendError::NoScriptMatch { .. })));
        assert_eq!(driver.calls(), 3);
    }

    #[test]
    fn fixture_file_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.jsonl");
        std::fs::write(&p, "{\"contains\":[\"x\",\"y\"],\"text\":\"t\",\"finish_reason\":\"length\"}\n\n").unwrap();
        let d = ScriptedDriver::load(&p).unwrap();
        assert_eq!(d.rules.len(), 1);
        assert_eq!(d.rules[0].finish_reason, FinishReason::Length);
        std::fs::write(&p, "{\"text\":\"t\"}\n").unwrap();
        assert!(ScriptedDriver::load(&p).is_err());
    }
}
