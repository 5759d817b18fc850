//! OpenAI-compatible chat and text-completion providers.

use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendError, ModelConfig, Provider, Request};
use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "ONTOPROBE_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    Status(u16, String),
    Network(String),
    Decode(String),
}

/// Minimal JSON-over-HTTP POST, swappable for tests.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, api_key: Option<&str>, body: &Value) -> std::result::Result<Value, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        UreqTransport {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, api_key: Option<&str>, body: &Value) -> std::result::Result<Value, TransportError> {
        let mut req = self.agent.post(url).set("Content-Type", "application/json");
        if let Some(key) = api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body) {
            Ok(resp) => resp
                .into_json::<Value>()
                .map_err(|e| TransportError::Decode(e.to_string())),
            Err(ureq::Error::Status(code, resp)) => {
                Err(TransportError::Status(code, resp.into_string().unwrap_or_default()))
            }
            Err(ureq::Error::Transport(t)) => Err(TransportError::Network(t.to_string())),
        }
    }
}

pub struct HttpBackend<T: Transport> {
    provider: Provider,
    url: String,
    model_name: String,
    max_tokens: u32,
    api_key: Option<String>,
    transport: T,
}

impl<T: Transport> HttpBackend<T> {
    pub fn new(config: &ModelConfig, api_key: Option<String>, transport: T) -> Result<Self> {
        let endpoint = config
            .endpoint
            .as_deref()
            .ok_or_else(|| Error::Config("HTTP providers need an `endpoint`".into()))?
            .trim_end_matches('/');
        let url = match config.provider {
            Provider::ChatHttp => format!("{endpoint}/chat/completions"),
            Provider::CompletionHttp => format!("{endpoint}/completions"),
            Provider::Synthetic => return Err(Error::Config("synthetic provider is not an HTTP backend".into())),
        };
        Ok(HttpBackend {
            provider: config.provider,
            url,
            model_name: config.model_name.clone(),
            max_tokens: config.max_new_tokens,
            api_key,
            transport,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn request_body(&self, request: &Request) -> Value {
        match self.provider {
            Provider::CompletionHttp => json!({
                "model": self.model_name,
                "temperature": request.temperature,
                "max_tokens": self.max_tokens,
                "prompt": request.prompt.text,
            }),
            _ => json!({
                "model": self.model_name,
                "temperature": request.temperature,
                "messages": [{"role": "user", "content": request.prompt.text}],
            }),
        }
    }

    fn answer_text(&self, body: &Value) -> Option<String> {
        let choice = body.get("choices")?.get(0)?;
        let text = match self.provider {
            Provider::CompletionHttp => choice.get("text")?,
            _ => choice.get("message")?.get("content")?,
        };
        match text {
            Value::String(s) => Some(s.clone()),
            Value::Null => Some(String::new()),
            _ => None,
        }
    }
}

impl<T: Transport> Backend for HttpBackend<T> {
    fn call(&self, request: &Request) -> std::result::Result<String, BackendError> {
        let body = self.request_body(request);
        match self.transport.post_json(&self.url, self.api_key.as_deref(), &body) {
            Ok(reply) => self
                .answer_text(&reply)
                .ok_or_else(|| BackendError::Transient(format!("response has no answer text: {reply}"))),
            Err(TransportError::Status(code, text)) => Err(classify_status(code, text)),
            Err(TransportError::Network(msg)) | Err(TransportError::Decode(msg)) => Err(BackendError::Transient(msg)),
        }
    }
}

fn classify_status(code: u16, text: String) -> BackendError {
    let msg = format!("HTTP {code}: {text}");
    match code {
        401 | 403 => BackendError::Auth(msg),
        408 | 409 | 429 => BackendError::Transient(msg),
        500..=599 => BackendError::Transient(msg),
        _ => BackendError::Fatal(msg),
    }
}
