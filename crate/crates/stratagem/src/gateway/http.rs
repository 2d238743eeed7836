//! Live backend speaking the common chat-completions HTTP shape.
//!
//! Requests go to `{base_url}/chat/completions`; replies are read from
//! `choices[0].message.content` with usage from `usage.prompt_tokens` and
//! `usage.completion_tokens`. Transient failures (transport errors, 429,
//! 5xx) are retried with exponential backoff; other statuses fail fast.

use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, ChatRequest, RawCompletion, Role};
use crate::error::{Error, Result};

/// Connection settings for a live endpoint.
#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    /// Name of the environment variable holding the bearer token, if any.
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: String::new(),
            api_key_env: None,
            timeout_secs: 60,
            max_attempts: 5,
            initial_backoff_ms: 200,
        }
    }
}

/// Chat backend over HTTP.
pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build();
        let api_key = config
            .api_key_env
            .as_ref()
            .and_then(|name| std::env::var(name).ok());
        HttpBackend {
            config,
            agent,
            api_key,
        }
    }

    fn post_with_retry(&self, url: &str, body: &Value) -> Result<Value> {
        let mut backoff = Duration::from_millis(self.config.initial_backoff_ms);
        let attempts = self.config.max_attempts.max(1);
        let mut last_error = Error::Transport {
            message: "no attempt made".into(),
        };
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(backoff);
                backoff *= 2;
            }
            let mut request = self.agent.post(url);
            if let Some(key) = &self.api_key {
                request = request.set("Authorization", &format!("Bearer {key}"));
            }
            match request.send_json(body.clone()) {
                Ok(response) => {
                    return response.into_json::<Value>().map_err(|e| Error::Transport {
                        message: format!("invalid JSON reply: {e}"),
                    });
                }
                Err(ureq::Error::Status(status, response)) => {
                    let body_text = response.into_string().unwrap_or_default();
                    let error = Error::HttpStatus {
                        status,
                        body: body_text,
                    };
                    if status == 429 || status >= 500 {
                        log::warn!("attempt {} got status {status}, retrying", attempt + 1);
                        last_error = error;
                    } else {
                        return Err(error);
                    }
                }
                Err(ureq::Error::Transport(t)) => {
                    log::warn!("attempt {} transport error: {t}", attempt + 1);
                    last_error = Error::Transport {
                        message: t.to_string(),
                    };
                }
            }
        }
        Err(last_error)
    }
}

impl Backend for HttpBackend {
    fn complete(&self, _role: Role, request: &ChatRequest) -> Result<RawCompletion> {
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let body = json!({
            "model": request.model_id,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let reply = self.post_with_retry(&url, &body)?;

        let text = reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::MalformedResponse {
                field: "choices[0].message.content".into(),
            })?
            .to_string();
        let input_tokens = reply
            .pointer("/usage/prompt_tokens")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::MalformedResponse {
                field: "usage.prompt_tokens".into(),
            })?;
        let output_tokens = reply
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::MalformedResponse {
                field: "usage.completion_tokens".into(),
            })?;
        Ok(RawCompletion {
            text,
            input_tokens,
            output_tokens,
        })
    }
}

/// Client for an embeddings endpoint with the usual
/// `{base_url}/embeddings` request shape.
pub struct EmbeddingsClient {
    config: HttpConfig,
    model: String,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl EmbeddingsClient {
    pub fn new(config: HttpConfig, model: impl Into<String>) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build();
        let api_key = config
            .api_key_env
            .as_ref()
            .and_then(|name| std::env::var(name).ok());
        EmbeddingsClient {
            config,
            model: model.into(),
            agent,
            api_key,
        }
    }

    /// Embeds `texts`, preserving order.
    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let url = format!(
            "{}/embeddings",
            self.config.base_url.trim_end_matches('/')
        );
        let mut request = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        let reply: Value = request
            .send_json(json!({ "model": self.model, "input": texts }))
            .map_err(|e| match e {
                ureq::Error::Status(status, response) => Error::HttpStatus {
                    status,
                    body: response.into_string().unwrap_or_default(),
                },
                ureq::Error::Transport(t) => Error::Transport {
                    message: t.to_string(),
                },
            })?
            .into_json()
            .map_err(|e| Error::Transport {
                message: format!("invalid JSON reply: {e}"),
            })?;

        let data = reply
            .pointer("/data")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::MalformedResponse {
                field: "data".into(),
            })?;
        data.iter()
            .enumerate()
            .map(|(i, entry)| {
                entry
                    .pointer("/embedding")
                    .and_then(Value::as_array)
                    .map(|xs| xs.iter().filter_map(Value::as_f64).collect())
                    .ok_or_else(|| Error::MalformedResponse {
                        field: format!("data[{i}].embedding"),
                    })
            })
            .collect()
    }
}
