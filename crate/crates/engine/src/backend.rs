//! Text-generation backends.

use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::config::BackendConfig;

/// Retries after the first failed attempt.
pub const MAX_RETRIES: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("backend {backend} failed after {attempts} attempt(s): {message}")]
pub struct BackendError {
    pub backend: String,
    pub attempts: u32,
    pub message: String,
    /// True when a later identical request may succeed.
    pub retriable: bool,
}

pub trait GenerationBackend: Send + Sync {
    fn id(&self) -> String;
    fn generate(&self, prompt: &str) -> Result<String, BackendError>;
}

/// Pure function of the prompt: returns a digest-stamped stand-in, or a
/// fixed response when one is configured.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    response: Option<String>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn canned(response: impl Into<String>) -> Self {
        Self { response: Some(response.into()) }
    }

    pub fn digest(prompt: &str) -> String {
        hex::encode(Sha256::digest(prompt.as_bytes()))
    }

    /// The text returned for `prompt` when no response is configured.
    pub fn render(prompt: &str) -> String {
        format!("mock explanation sha256:{}", Self::digest(prompt))
    }
}

impl GenerationBackend for MockBackend {
    fn id(&self) -> String {
        match self.response {
            Some(_) => "mock:canned".into(),
            None => "mock".into(),
        }
    }

    fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        Ok(self.response.clone().unwrap_or_else(|| Self::render(prompt)))
    }
}

/// Single-turn OpenAI-compatible chat completion over HTTP.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    pub endpoint: String,
    pub model: String,
    api_key: Option<String>,
    pub timeout: Duration,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff: Duration,
}

enum Failure {
    Transient(String),
    Fatal(String),
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            timeout: Duration::from_secs(30),
            backoff: Duration::from_millis(250),
        }
    }

    fn attempt(&self, client: &reqwest::blocking::Client, prompt: &str) -> Result<String, Failure> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let mut request = client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| Failure::Transient(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| Failure::Transient(e.to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Failure::Transient(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(format!("HTTP {status}: {text}")));
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Failure::Fatal(format!("response is not JSON: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| Failure::Fatal("response has no choices[0].message.content".into()))
    }
}

impl GenerationBackend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.model)
    }

    fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        let error = |attempts, message, retriable| BackendError { backend: self.id(), attempts, message, retriable };
        // Built per call: the blocking client must not live inside an
        // async runtime.
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| error(0, e.to_string(), false))?;
        let mut delay = self.backoff;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&client, prompt) {
                Ok(text) => return Ok(text),
                Err(Failure::Fatal(message)) => return Err(error(attempts, message, false)),
                Err(Failure::Transient(message)) if attempts > MAX_RETRIES => {
                    return Err(error(attempts, message, true))
                }
                Err(Failure::Transient(_)) => {
                    std::thread::sleep(delay);
                    delay *= 2;
                }
            }
        }
    }
}

/// Builds the configured backend, reading credentials from the environment.
pub fn from_config(config: &BackendConfig) -> Box<dyn GenerationBackend> {
    match config {
        BackendConfig::Mock { response: Some(text) } => Box::new(MockBackend::canned(text.clone())),
        BackendConfig::Mock { response: None } => Box::new(MockBackend::new()),
        BackendConfig::Http { endpoint, model, api_key_env, timeout_ms } => {
            let mut backend = HttpBackend::new(endpoint.clone(), model.clone(), std::env::var(api_key_env).ok());
            backend.timeout = Duration::from_millis(*timeout_ms);
            Box::new(backend)
        }
    }
}
