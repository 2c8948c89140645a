use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::json;

use super::{BackendError, ChatRequest, Reasoner};

/// Connection settings for an OpenAI-compatible chat endpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct LiveConfig {
    pub api_base: String,
    pub api_key: String,
    pub model: String,
    pub parallelism: usize,
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl LiveConfig {
    /// Reads `RLAB_API_BASE`, `RLAB_API_KEY`, `RLAB_MODEL` and
    /// `RLAB_PARALLELISM`.
    pub fn from_env() -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        LiveConfig {
            api_base: var("RLAB_API_BASE").unwrap_or_else(|| "https://api.openai.com".into()),
            api_key: var("RLAB_API_KEY").unwrap_or_default(),
            model: var("RLAB_MODEL").unwrap_or_else(|| "gpt-4o-mini".into()),
            parallelism: var("RLAB_PARALLELISM").and_then(|v| v.parse().ok()).unwrap_or(4),
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
            timeout: Duration::from_secs(120),
        }
    }

    pub fn endpoint(&self) -> String {
        let base = self.api_base.trim_end_matches('/');
        if base.ends_with("/v1") {
            format!("{base}/chat/completions")
        } else {
            format!("{base}/v1/chat/completions")
        }
    }
}

/// Blocking HTTP client with bounded retries and a concurrency limit.
pub struct LiveBackend {
    config: LiveConfig,
    client: reqwest::blocking::Client,
    slots: Mutex<usize>,
    freed: Condvar,
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Result<Self, BackendError> {
        if config.api_key.is_empty() {
            return Err(BackendError::Config("no API key (set RLAB_API_KEY)".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        let slots = Mutex::new(config.parallelism.max(1));
        Ok(LiveBackend { config, client, slots, freed: Condvar::new() })
    }

    pub fn config(&self) -> &LiveConfig {
        &self.config
    }

    fn acquire(&self) {
        let mut free = self.slots.lock().expect("slot lock");
        while *free == 0 {
            free = self.freed.wait(free).expect("slot lock");
        }
        *free -= 1;
    }

    fn release(&self) {
        *self.slots.lock().expect("slot lock") += 1;
        self.freed.notify_one();
    }

    fn attempt(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let model = if request.model.is_empty() { &self.config.model } else { &request.model };
        let body = json!({
            "model": model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let resp = self
            .client
            .post(self.config.endpoint())
            .bearer_auth(&self.config.api_key)
            .json(&body)
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| BackendError::Transport(e.to_string()))?;
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(BackendError::Auth(format!("HTTP {status}")));
        }
        if status.is_client_error() && status.as_u16() != 429 {
            return Err(BackendError::BadRequest(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>())));
        }
        if !status.is_success() {
            return Err(BackendError::Transport(format!("HTTP {status}")));
        }
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        let choice = &v["choices"][0];
        if choice["finish_reason"] == "length" {
            log::warn!("response truncated at max_tokens={}", request.max_tokens);
        }
        choice["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Malformed("no choices[0].message.content".into()))
    }
}

impl Reasoner for LiveBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.acquire();
        let mut delay = self.config.initial_backoff;
        let mut result = Err(BackendError::Transport("no attempt made".into()));
        for attempt in 1..=self.config.attempts.max(1) {
            result = self.attempt(request);
            match &result {
                Err(BackendError::Transport(e)) if attempt < self.config.attempts => {
                    log::warn!("attempt {attempt} failed: {e}; retrying in {delay:?}");
                    std::thread::sleep(delay);
                    delay *= 2;
                }
                _ => break,
            }
        }
        self.release();
        result
    }

    fn name(&self) -> String {
        self.config.model.clone()
    }
}
