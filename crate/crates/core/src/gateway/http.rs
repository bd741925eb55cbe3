//! OpenAI-compatible chat-completions backend.
//!
//! Speaks the plain `POST /chat/completions` wire shape: bearer auth from a
//! configured environment variable, `model`/`messages`/`max_tokens` fields,
//! token usage read back from `usage` when the server provides it.

use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendFailure, BackendReply, GatewayConfig, GatewayError, LlmRequest};

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn from_config(cfg: &GatewayConfig) -> Result<Self, GatewayError> {
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| GatewayError::Config("http backend needs an endpoint".into()))?;
        let model = cfg
            .model
            .clone()
            .ok_or_else(|| GatewayError::Config("http backend needs a model name".into()))?;
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                GatewayError::Config(format!("api key environment variable {var} is not set"))
            })?),
            None => None,
        };
        let url = if endpoint.ends_with("/chat/completions") {
            endpoint
        } else {
            format!("{}/chat/completions", endpoint.trim_end_matches('/'))
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.request_timeout_ms))
            .build()
            .map_err(|e| GatewayError::Config(format!("http client: {e}")))?;
        Ok(Self {
            client,
            url,
            model,
            api_key,
        })
    }
}

impl Backend for HttpBackend {
    fn execute(&self, req: &LlmRequest) -> Result<BackendReply, BackendFailure> {
        let mut body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": req.prompt}],
        });
        if let Some(max) = req.max_output_tokens {
            body["max_tokens"] = json!(max);
        }
        if let Some(t) = req.temperature {
            body["temperature"] = json!(t);
        }
        let mut request = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                BackendFailure::Timeout(e.to_string())
            } else {
                BackendFailure::Transient(e.to_string())
            }
        })?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            let detail = format!("{status}: {}", body.chars().take(300).collect::<String>());
            return if status.as_u16() == 408
                || status.as_u16() == 429
                || status.is_server_error()
            {
                Err(BackendFailure::Transient(detail))
            } else {
                Err(BackendFailure::Permanent(detail))
            };
        }
        let payload: Value = response
            .json()
            .map_err(|e| BackendFailure::Permanent(format!("invalid response body: {e}")))?;
        let text = payload["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| {
                BackendFailure::Permanent("response has no choices[0].message.content".into())
            })?
            .to_string();
        let usage = &payload["usage"];
        Ok(BackendReply {
            text,
            prompt_tokens: usage["prompt_tokens"].as_u64().map(|v| v as usize),
            completion_tokens: usage["completion_tokens"].as_u64().map(|v| v as usize),
        })
    }

    fn name(&self) -> &'static str {
        "http"
    }
}
