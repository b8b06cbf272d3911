//! Scriptable in-process backend for deterministic tests and offline runs.
//!
//! A script is a JSON document:
//!
//! ```json
//! {
//!   "rules": [
//!     {"pattern": "(?i)objective rewrite", "response": "Blanco worked ...",
//!      "failures": [429, 429]},
//!     {"pattern": "Compare", "response": "{\"verdict\": \"objective\"}",
//!      "fail_always": "timeout"}
//!   ],
//!   "default": "OBJ-canned",
//!   "delay_ms": 0
//! }
//! ```
//!
//! Rules are tried in order against all message contents joined by newlines;
//! the first match answers. `failures` are injected on the rule's first calls
//! before it succeeds, `fail_always` makes every call fail. Failures are HTTP
//! status codes or one of `"timeout"`, `"connection"`, `"malformed"`. With no
//! match and no `default`, the mock answers HTTP 404.

use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, ChatResponse, GatewayError, TransportError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockFailure {
    Status(u16),
    Named(NamedFailure),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedFailure {
    Timeout,
    Connection,
    Malformed,
}

impl MockFailure {
    fn to_error(&self) -> TransportError {
        match self {
            MockFailure::Status(status) => TransportError::Status {
                status: *status,
                body: format!("mock failure {status}"),
            },
            MockFailure::Named(NamedFailure::Timeout) => TransportError::Timeout,
            MockFailure::Named(NamedFailure::Connection) => TransportError::Connection("mock connection reset".into()),
            MockFailure::Named(NamedFailure::Malformed) => {
                TransportError::Malformed("mock body without content".into())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub pattern: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<MockFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_always: Option<MockFailure>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
    /// Artificial latency per call, to make concurrency observable.
    #[serde(default)]
    pub delay_ms: u64,
}

impl MockScript {
    /// Answers every request with `response`.
    pub fn constant(response: impl Into<String>) -> Self {
        MockScript {
            default: Some(response.into()),
            ..MockScript::default()
        }
    }

    pub fn rule(mut self, pattern: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules.push(MockRule {
            pattern: pattern.into(),
            response: response.into(),
            failures: Vec::new(),
            fail_always: None,
        });
        self
    }

    /// Injects `failures` ahead of the most recently added rule's success.
    pub fn failing_first(mut self, failures: Vec<MockFailure>) -> Self {
        if let Some(last) = self.rules.last_mut() {
            last.failures = failures;
        }
        self
    }

    pub fn failing_always(mut self, failure: MockFailure) -> Self {
        if let Some(last) = self.rules.last_mut() {
            last.fail_always = Some(failure);
        }
        self
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay_ms = delay.as_millis() as u64;
        self
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("mock script {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| GatewayError::Config(format!("mock script {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MockStats {
    pub calls: u64,
    pub max_in_flight: usize,
}

struct CompiledRule {
    regex: Regex,
    rule: MockRule,
    hits: AtomicUsize,
}

pub struct MockBackend {
    rules: Vec<CompiledRule>,
    default: Option<String>,
    delay: Duration,
    calls: AtomicU64,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    log: Mutex<Vec<ChatRequest>>,
}

impl MockBackend {
    /// Panics on an invalid rule pattern; use [`MockBackend::try_new`] for
    /// scripts from untrusted files.
    pub fn new(script: MockScript) -> Self {
        Self::try_new(script).expect("valid mock script")
    }

    pub fn try_new(script: MockScript) -> Result<Self, GatewayError> {
        let rules = script
            .rules
            .into_iter()
            .map(|rule| {
                let regex = Regex::new(&rule.pattern)
                    .map_err(|e| GatewayError::Config(format!("mock pattern `{}`: {e}", rule.pattern)))?;
                Ok(CompiledRule {
                    regex,
                    rule,
                    hits: AtomicUsize::new(0),
                })
            })
            .collect::<Result<Vec<_>, GatewayError>>()?;
        Ok(MockBackend {
            rules,
            default: script.default,
            delay: Duration::from_millis(script.delay_ms),
            calls: AtomicU64::new(0),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        })
    }

    pub fn stats(&self) -> MockStats {
        MockStats {
            calls: self.calls.load(Ordering::SeqCst),
            max_in_flight: self.max_in_flight.load(Ordering::SeqCst),
        }
    }

    /// Every request received, in arrival order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().unwrap().clone()
    }

    fn answer(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let content = request.joined_content();
        let Some(compiled) = self.rules.iter().find(|r| r.regex.is_match(&content)) else {
            return self.default.clone().ok_or_else(|| TransportError::Status {
                status: 404,
                body: "no mock rule matches".into(),
            });
        };
        if let Some(f) = &compiled.rule.fail_always {
            return Err(f.to_error());
        }
        let hit = compiled.hits.fetch_add(1, Ordering::SeqCst);
        match compiled.rule.failures.get(hit) {
            Some(f) => Err(f.to_error()),
            None => Ok(compiled.rule.response.clone()),
        }
    }
}

impl ChatBackend for MockBackend {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log.lock().unwrap().push(request.clone());
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let result = self.answer(request);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result.map(|content| ChatResponse {
            content,
            model: request.model.clone(),
            usage: None,
            latency_ms: 0,
        })
    }

    fn describe(&self) -> String {
        format!("mock ({} rules)", self.rules.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Message;

    fn ask(text: &str) -> ChatRequest {
        ChatRequest::new("gpt-4.1-mini", vec![Message::user(text)])
    }

    #[test]
    fn first_matching_rule_wins() {
        let mock = MockBackend::new(MockScript::default().rule("(?i)alpha", "A").rule("alpha|beta", "B"));
        assert_eq!(mock.send(&ask("ALPHA beta")).unwrap().content, "A");
        assert_eq!(mock.send(&ask("beta")).unwrap().content, "B");
        assert!(matches!(
            mock.send(&ask("gamma")),
            Err(TransportError::Status { status: 404, .. })
        ));
        assert_eq!(mock.stats().calls, 3);
    }

    #[test]
    fn script_json_shape() {
        let script: MockScript = serde_json::from_str(
            r#"{"rules":[{"pattern":"x","response":"y","failures":[429,"timeout"],"fail_always":"malformed"}],
                "default":"d"}"#,
        )
        .unwrap();
        assert_eq!(
            script.rules[0].failures,
            vec![MockFailure::Status(429), MockFailure::Named(NamedFailure::Timeout)]
        );
        assert_eq!(
            script.rules[0].fail_always,
            Some(MockFailure::Named(NamedFailure::Malformed))
        );
        assert!(MockBackend::try_new(MockScript::default().rule("(", "bad")).is_err());
    }
}
