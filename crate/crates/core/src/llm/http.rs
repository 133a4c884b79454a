use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::{LlmBackend, LlmError, LlmRequest};

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl HttpConfig {
    pub const DEFAULT_MODEL: &'static str = "gpt-oss-120b";

    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: None,
            model: Self::DEFAULT_MODEL.to_string(),
            timeout: Duration::from_secs(60),
            max_in_flight: 4,
        }
    }

    /// Reads `LLM_ENDPOINT`, `LLM_API_KEY` and `LLM_MODEL`.
    pub fn from_env() -> Result<Self, LlmError> {
        let endpoint = std::env::var("LLM_ENDPOINT")
            .ok()
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| LlmError::InvalidRequest("LLM_ENDPOINT is not set".into()))?;
        let mut cfg = Self::new(endpoint);
        cfg.api_key = std::env::var("LLM_API_KEY").ok().filter(|s| !s.is_empty());
        if let Ok(model) = std::env::var("LLM_MODEL") {
            if !model.trim().is_empty() {
                cfg.model = model;
            }
        }
        Ok(cfg)
    }
}

struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("slot lock");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slot lock") += 1;
        self.0.cv.notify_one();
    }
}

/// Chat-completions client: `POST {model, messages, temperature: 0}`.
pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    slots: Slots,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let slots = Slots {
            free: Mutex::new(config.max_in_flight.max(1)),
            cv: Condvar::new(),
        };
        Ok(Self { config, client, slots })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    pub fn body(&self, request: &LlmRequest) -> Value {
        json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": "Reply with a single JSON document and nothing else."},
                {"role": "user", "content": request.prompt},
            ],
            "temperature": 0,
        })
    }
}

impl LlmBackend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn send(&self, request: &LlmRequest) -> Result<String, LlmError> {
        let _slot = self.slots.acquire();
        let mut builder = self.client.post(&self.config.endpoint).json(&self.body(request));
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| LlmError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(LlmError::Transport(format!("HTTP {status}: {}", truncate(&text, 200))));
        }
        let body: Value = serde_json::from_str(&text)
            .map_err(|e| LlmError::Transport(format!("response body is not JSON: {e}")))?;
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::Transport("response lacks choices[0].message.content".into()))
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
