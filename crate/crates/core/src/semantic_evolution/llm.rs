use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env_var: String,
    pub max_retries: u32,
    pub timeout_seconds: f64,
    pub temperature: f64,
    /// First retry delay; later delays double.
    pub backoff_base_seconds: f64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "gpt-3.5-turbo".into(),
            api_key_env_var: "OPENAI_API_KEY".into(),
            max_retries: 3,
            timeout_seconds: 60.0,
            temperature: 0.0,
            backoff_base_seconds: 1.0,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_seconds > 0.0) {
            return Err(Error::Config("timeout_seconds must be positive".into()));
        }
        if !(self.backoff_base_seconds >= 0.0) {
            return Err(Error::Config("backoff_base_seconds must be non-negative".into()));
        }
        if self.model_name.is_empty() {
            return Err(Error::Config("model_name is empty".into()));
        }
        Ok(())
    }

    pub fn request(&self, prompt: &str) -> ChatRequest {
        ChatRequest {
            model: self.model_name.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt.into(),
            }],
            temperature: self.temperature,
        }
    }
}

/// Sleep before each retry: `base * 2^i` for `i` in `0..max_retries`.
pub fn retry_delays(config: &LlmConfig) -> Vec<Duration> {
    (0..config.max_retries)
        .map(|i| Duration::from_secs_f64(config.backoff_base_seconds * 2f64.powi(i as i32)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Wire body of a chat-completion call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendError {
    /// Connection failures, timeouts, non-2xx statuses. Retried.
    Transient(String),
    /// The server answered but the body is not a chat completion. Not retried.
    Malformed(String),
}

pub trait ChatBackend: Send + Sync {
    /// Returns `choices[0].message.content` of the completion.
    fn complete(&self, request: &ChatRequest) -> std::result::Result<String, BackendError>;
}

pub struct HttpBackend {
    endpoint: String,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: &LlmConfig, api_key: impl Into<String>) -> Result<Self> {
        config.validate()?;
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_seconds)))
            .http_status_as_error(false)
            .build();
        Ok(Self {
            endpoint: config.endpoint_url.clone(),
            api_key: api_key.into(),
            agent: ureq::Agent::new_with_config(agent_config),
        })
    }

    /// Reads the key from the environment variable named in the config.
    pub fn from_env(config: &LlmConfig) -> Result<Self> {
        let key = std::env::var(&config.api_key_env_var).map_err(|_| {
            Error::Config(format!(
                "environment variable `{}` with the API key is not set",
                config.api_key_env_var
            ))
        })?;
        Self::new(config, key)
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<String, BackendError> {
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(request)
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(BackendError::Transient(format!("HTTP {}", status.as_u16())));
        }
        let body: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        body.pointer("/choices/0/message/content")
            .and_then(serde_json::Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delays_double_from_base() {
        let cfg = LlmConfig {
            max_retries: 4,
            ..LlmConfig::default()
        };
        let secs: Vec<f64> = retry_delays(&cfg).iter().map(Duration::as_secs_f64).collect();
        assert_eq!(secs, vec![1.0, 2.0, 4.0, 8.0]);
        let none = LlmConfig {
            max_retries: 0,
            ..LlmConfig::default()
        };
        assert!(retry_delays(&none).is_empty());
    }

    #[test]
    fn request_body_shape() {
        let cfg = LlmConfig::default();
        let body = serde_json::to_value(cfg.request("hi")).unwrap();
        assert_eq!(
            body,
            serde_json::json!({
                "model": "gpt-3.5-turbo",
                "messages": [{"role": "user", "content": "hi"}],
                "temperature": 0.0
            })
        );
    }

    #[test]
    fn missing_key_is_config_error() {
        let cfg = LlmConfig {
            api_key_env_var: "PROTOLAB_TEST_KEY_THAT_IS_NEVER_SET".into(),
            ..LlmConfig::default()
        };
        assert!(matches!(HttpBackend::from_env(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_timeout_rejected() {
        let cfg = LlmConfig {
            timeout_seconds: 0.0,
            ..LlmConfig::default()
        };
        assert!(matches!(HttpBackend::new(&cfg, "k"), Err(Error::Config(_))));
    }
}
