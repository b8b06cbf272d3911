//! OpenAI-compatible `POST <endpoint>/chat/completions` transport.

use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

use super::{ChatBackend, ChatRequest, ChatResponse, GatewayError, Message, TransportError, Usage};

pub const API_KEY_ENV: &str = "SUBJSCAN_API_KEY";
pub const ENDPOINT_ENV: &str = "SUBJSCAN_ENDPOINT";

pub struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

impl HttpBackend {
    /// `endpoint` is the base URL; `/chat/completions` is appended.
    pub fn new(endpoint: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, GatewayError> {
        let endpoint = endpoint.trim().trim_end_matches('/');
        if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
            return Err(GatewayError::Config(format!(
                "endpoint `{endpoint}` is not an http(s) URL"
            )));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpBackend {
            agent,
            url: format!("{endpoint}/chat/completions"),
            api_key: api_key.filter(|k| !k.is_empty()),
        })
    }

    /// Reads the endpoint from `SUBJSCAN_ENDPOINT` (unless given) and the
    /// bearer credential from `SUBJSCAN_API_KEY`.
    pub fn from_env(endpoint: Option<&str>, timeout: Duration) -> Result<Self, GatewayError> {
        let endpoint = match endpoint {
            Some(e) => e.to_string(),
            None => std::env::var(ENDPOINT_ENV)
                .map_err(|_| GatewayError::Config(format!("no endpoint: set {ENDPOINT_ENV} or pass --endpoint")))?,
        };
        Self::new(&endpoint, std::env::var(API_KEY_ENV).ok(), timeout)
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

/// Extracts `choices[0].message.content` and optional usage from a
/// chat-completions response body.
pub(crate) fn parse_response(body: &str, model: &str) -> Result<ChatResponse, TransportError> {
    let v: Value = serde_json::from_str(body).map_err(|e| TransportError::Malformed(format!("invalid JSON: {e}")))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| TransportError::Malformed("no choices[0].message.content".into()))?;
    let usage = v.get("usage").and_then(|u| {
        Some(Usage {
            prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
            completion_tokens: u.get("completion_tokens")?.as_u64()?,
            total_tokens: u.get("total_tokens")?.as_u64()?,
        })
    });
    Ok(ChatResponse {
        content: content.to_string(),
        model: v.get("model").and_then(Value::as_str).unwrap_or(model).to_string(),
        usage,
        latency_ms: 0,
    })
}

impl ChatBackend for HttpBackend {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let body = WireRequest {
            model: &request.model,
            messages: &request.messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let mut builder = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            builder = builder.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = builder.send_json(&body).map_err(map_error)?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(map_error)?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Status { status, body: text });
        }
        parse_response(&text, &request.model)
    }

    fn describe(&self) -> String {
        format!("http {}", self.url)
    }
}

fn map_error(e: ureq::Error) -> TransportError {
    match e {
        ureq::Error::Timeout(_) => TransportError::Timeout,
        ureq::Error::StatusCode(status) => TransportError::Status {
            status,
            body: String::new(),
        },
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => TransportError::Timeout,
        other => TransportError::Connection(other.to_string()),
    }
}
