use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatProvider, ChatRequest, ProviderError};

pub const LLM_KEY_ENV: &str = "CINE_LLM_KEY";
pub const LLM_ENDPOINT_ENV: &str = "CINE_LLM_ENDPOINT";
pub const LLM_MODEL_ENV: &str = "CINE_LLM_MODEL";

const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

/// Chat-completion client speaking `{model, messages, temperature}` and
/// reading `choices[0].message.content`.
pub struct HttpChatProvider {
    endpoint: String,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpChatProvider {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        HttpChatProvider {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            agent,
        }
    }

    /// Reads the key and optional endpoint from the environment.
    pub fn from_env() -> Result<Self, String> {
        let key = std::env::var(LLM_KEY_ENV).map_err(|_| format!("{LLM_KEY_ENV} is not set"))?;
        if key.trim().is_empty() {
            return Err(format!("{LLM_KEY_ENV} is empty"));
        }
        let endpoint =
            std::env::var(LLM_ENDPOINT_ENV).unwrap_or_else(|_| DEFAULT_ENDPOINT.to_string());
        Ok(Self::new(endpoint, key))
    }
}

fn retry_after(value: Option<&ureq::http::HeaderValue>) -> Option<Duration> {
    value
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<f64>().ok())
        .filter(|s| s.is_finite() && *s >= 0.0)
        .map(Duration::from_secs_f64)
}

impl ChatProvider for HttpChatProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn send(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let body = json!({
            "model": request.model_name,
            "messages": request.messages,
            "temperature": request.temperature,
        });
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let hint = retry_after(response.headers().get("retry-after"));
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        match status {
            200..=299 => {}
            429 => return Err(ProviderError::RateLimited { retry_after: hint }),
            408 | 500..=599 => return Err(ProviderError::Transport(format!("HTTP {status}"))),
            _ => return Err(ProviderError::Rejected { status, body: text }),
        }
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Transport(format!("bad JSON: {e}")))?;
        Ok(v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string())
    }
}
