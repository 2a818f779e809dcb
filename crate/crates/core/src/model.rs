//! Completion backends: a scripted provider for deterministic runs and a
//! generic HTTP JSON provider.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::sha256_hex;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown model provider `{0}`")]
    UnknownProvider(String),
    #[error("model provider `{0}` already registered")]
    DuplicateProvider(String),
    #[error("completion prompt is empty")]
    EmptyPrompt,
    #[error("no scripted rule matched the prompt")]
    NoRuleMatched,
    #[error("script has more than one DEFAULT rule")]
    MultipleDefaults,
    #[error("invalid script: {0}")]
    InvalidScript(String),
    #[error("model request timed out")]
    Timeout,
    #[error("model HTTP request failed: {0}")]
    HttpFailure(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop: Vec<String>,
    pub seed: Option<u64>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens: 512,
            temperature: 0.7,
            stop: Vec::new(),
            seed: None,
        }
    }
}

pub trait ModelProvider: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ModelError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptMatcher {
    /// SHA-256 hex digest of the whole prompt.
    Exact(String),
    Contains(String),
    Default,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScriptedRule {
    pub matcher: ScriptMatcher,
    pub response: String,
    #[serde(default)]
    pub consume_once: bool,
}

impl ScriptedRule {
    pub fn contains(needle: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            matcher: ScriptMatcher::Contains(needle.into()),
            response: response.into(),
            consume_once: false,
        }
    }

    pub fn exact(prompt: &str, response: impl Into<String>) -> Self {
        Self {
            matcher: ScriptMatcher::Exact(sha256_hex(prompt.as_bytes())),
            response: response.into(),
            consume_once: false,
        }
    }

    pub fn fallback(response: impl Into<String>) -> Self {
        Self {
            matcher: ScriptMatcher::Default,
            response: response.into(),
            consume_once: false,
        }
    }

    pub fn once(mut self) -> Self {
        self.consume_once = true;
        self
    }
}

/// Plays back canned responses. Temperature and seed are ignored.
#[derive(Debug)]
pub struct ScriptedProvider {
    rules: Mutex<Vec<(ScriptedRule, bool)>>,
    calls: AtomicUsize,
}

impl ScriptedProvider {
    pub fn new(rules: Vec<ScriptedRule>) -> Result<Self, ModelError> {
        let defaults = rules
            .iter()
            .filter(|r| r.matcher == ScriptMatcher::Default)
            .count();
        if defaults > 1 {
            return Err(ModelError::MultipleDefaults);
        }
        Ok(Self {
            rules: Mutex::new(rules.into_iter().map(|r| (r, false)).collect()),
            calls: AtomicUsize::new(0),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let rules: Vec<ScriptedRule> =
            serde_json::from_str(text).map_err(|e| ModelError::InvalidScript(e.to_string()))?;
        Self::new(rules)
    }

    /// Number of `complete` calls so far, matched or not.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ModelProvider for ScriptedProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ModelError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if request.prompt.is_empty() {
            return Err(ModelError::EmptyPrompt);
        }
        let digest = sha256_hex(request.prompt.as_bytes());
        let mut rules = self.rules.lock().unwrap();
        let pick = rules
            .iter()
            .position(|(r, used)| {
                !used && matches!(&r.matcher, ScriptMatcher::Exact(d) if *d == digest)
            })
            .or_else(|| {
                rules.iter().position(|(r, used)| {
                    !used
                        && matches!(&r.matcher,
                            ScriptMatcher::Contains(s) if request.prompt.contains(s.as_str()))
                })
            })
            .or_else(|| {
                rules
                    .iter()
                    .position(|(r, used)| !used && r.matcher == ScriptMatcher::Default)
            });
        let index = pick.ok_or(ModelError::NoRuleMatched)?;
        let (rule, consumed) = &mut rules[index];
        if rule.consume_once {
            *consumed = true;
        }
        Ok(rule.response.clone())
    }
}

#[derive(Serialize)]
struct HttpRequestBody<'a> {
    prompt: &'a str,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct HttpResponseBody {
    text: String,
}

/// POSTs `{"prompt":…,"max_tokens":…}` and reads `{"text":…}` back.
#[derive(Debug)]
pub struct HttpProvider {
    url: String,
    api_key: Option<String>,
    timeout: Duration,
    retries: u32,
    backoff: Duration,
}

impl HttpProvider {
    pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            api_key: None,
            timeout: Duration::from_millis(Self::DEFAULT_TIMEOUT_MS),
            retries: 2,
            backoff: Duration::from_millis(100),
        }
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    /// Body sent for `request`, byte for byte.
    pub fn request_body(request: &CompletionRequest) -> String {
        serde_json::to_string(&HttpRequestBody {
            prompt: &request.prompt,
            max_tokens: request.max_tokens,
        })
        .expect("request body serializes")
    }

    fn attempt(
        &self,
        client: &reqwest::blocking::Client,
        body: &str,
    ) -> Result<String, ModelError> {
        let mut req = client
            .post(&self.url)
            .header("content-type", "application/json")
            .body(body.to_owned());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                ModelError::Timeout
            } else {
                ModelError::HttpFailure(e.to_string())
            }
        })?;
        let status = resp.status();
        let bytes = resp.bytes().map_err(|e| {
            if e.is_timeout() {
                ModelError::Timeout
            } else {
                ModelError::HttpFailure(e.to_string())
            }
        })?;
        if !status.is_success() {
            return Err(ModelError::HttpFailure(format!("status {status}")));
        }
        let parsed: HttpResponseBody = serde_json::from_slice(&bytes)
            .map_err(|e| ModelError::HttpFailure(format!("bad response body: {e}")))?;
        Ok(parsed.text)
    }
}

impl ModelProvider for HttpProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ModelError> {
        if request.prompt.is_empty() {
            return Err(ModelError::EmptyPrompt);
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| ModelError::HttpFailure(e.to_string()))?;
        let body = Self::request_body(request);
        let mut delay = self.backoff;
        let mut last = ModelError::HttpFailure("no attempt made".into());
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(&client, &body) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "model request failed");
                    last = e;
                }
            }
        }
        Err(last)
    }
}

/// Id → provider lookup shared by every runtime in a process.
#[derive(Default)]
pub struct ModelRegistry {
    providers: RwLock<BTreeMap<String, Arc<dyn ModelProvider>>>,
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, id: &str, provider: Arc<dyn ModelProvider>) -> Result<(), ModelError> {
        let mut providers = self.providers.write().unwrap();
        if providers.contains_key(id) {
            return Err(ModelError::DuplicateProvider(id.to_owned()));
        }
        providers.insert(id.to_owned(), provider);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<Arc<dyn ModelProvider>> {
        self.providers.read().unwrap().get(id).cloned()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.providers.read().unwrap().contains_key(id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.providers.read().unwrap().keys().cloned().collect()
    }

    pub fn complete(&self, id: &str, request: &CompletionRequest) -> Result<String, ModelError> {
        let provider = self
            .get(id)
            .ok_or_else(|| ModelError::UnknownProvider(id.to_owned()))?;
        provider.complete(request)
    }
}

impl std::fmt::Debug for ModelRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelRegistry")
            .field("ids", &self.ids())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contains_rule_plays_back() {
        let p = ScriptedProvider::new(vec![ScriptedRule::contains(
            "swap",
            "Sure. ACTION: EXECUTE_SWAP",
        )])
        .unwrap();
        let out = p.complete(&CompletionRequest::new("please swap now")).unwrap();
        assert_eq!(out, "Sure. ACTION: EXECUTE_SWAP");
    }

    #[test]
    fn no_match_without_default() {
        let p = ScriptedProvider::new(vec![ScriptedRule::contains("swap", "x")]).unwrap();
        assert!(matches!(
            p.complete(&CompletionRequest::new("hello")),
            Err(ModelError::NoRuleMatched)
        ));
    }

    #[test]
    fn consume_once_falls_through_to_default() {
        let p = ScriptedProvider::new(vec![
            ScriptedRule::contains("hi", "first").once(),
            ScriptedRule::fallback("later"),
        ])
        .unwrap();
        let req = CompletionRequest::new("hi there");
        assert_eq!(p.complete(&req).unwrap(), "first");
        assert_eq!(p.complete(&req).unwrap(), "later");
        assert_eq!(p.calls(), 2);
    }

    #[test]
    fn exact_beats_contains_beats_default() {
        let p = ScriptedProvider::new(vec![
            ScriptedRule::fallback("default"),
            ScriptedRule::contains("abc", "contains"),
            ScriptedRule::exact("abc", "exact"),
        ])
        .unwrap();
        assert_eq!(p.complete(&CompletionRequest::new("abc")).unwrap(), "exact");
        assert_eq!(p.complete(&CompletionRequest::new("xabc")).unwrap(), "contains");
        assert_eq!(p.complete(&CompletionRequest::new("zzz")).unwrap(), "default");
    }

    #[test]
    fn two_defaults_rejected() {
        assert!(matches!(
            ScriptedProvider::new(vec![ScriptedRule::fallback("a"), ScriptedRule::fallback("b")]),
            Err(ModelError::MultipleDefaults)
        ));
    }

    #[test]
    fn script_json_format() {
        let p = ScriptedProvider::from_json(
            r#"[{"matcher":{"contains":"gm"},"response":"gm!","consumeOnce":true},
                {"matcher":"default","response":"ok"}]"#,
        )
        .unwrap();
        assert_eq!(p.complete(&CompletionRequest::new("gm fren")).unwrap(), "gm!");
        assert_eq!(p.complete(&CompletionRequest::new("gm fren")).unwrap(), "ok");
    }

    #[test]
    fn registry_lookup() {
        let reg = ModelRegistry::new();
        let p = Arc::new(ScriptedProvider::new(vec![ScriptedRule::fallback("x")]).unwrap());
        reg.register("b", p.clone()).unwrap();
        reg.register("a", p.clone()).unwrap();
        assert!(matches!(reg.register("a", p), Err(ModelError::DuplicateProvider(_))));
        assert_eq!(reg.complete("b", &CompletionRequest::new("q")).unwrap(), "x");
        assert!(matches!(
            reg.complete("zzz", &CompletionRequest::new("q")),
            Err(ModelError::UnknownProvider(_))
        ));
    }

    #[test]
    fn http_body_key_order() {
        let body = HttpProvider::request_body(&CompletionRequest::new("a\"b"));
        assert_eq!(body, r#"{"prompt":"a\"b","max_tokens":512}"#);
    }
}
