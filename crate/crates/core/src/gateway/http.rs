use std::thread;

use serde::Deserialize;
use serde_json::json;

use super::{CallTag, ChatClient, GatewayError, ModelConfig, ModelReply, Semaphore};
use crate::prompt::Message;

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

fn parse_reply(body: &str) -> Result<ModelReply, GatewayError> {
    let resp: WireResponse =
        serde_json::from_str(body).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
    let usage = resp
        .usage
        .ok_or_else(|| GatewayError::MalformedResponse("missing usage".into()))?;
    let choice = resp
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| GatewayError::MalformedResponse("no choices".into()))?;
    Ok(ModelReply {
        content: choice.message.content.unwrap_or_default(),
        input_tokens: usage.prompt_tokens,
        output_tokens: usage.completion_tokens,
        finish_reason: choice.finish_reason.unwrap_or_default(),
    })
}

/// Client for OpenAI-compatible chat-completions endpoints.
pub struct HttpClient {
    agent: ureq::Agent,
    api_key: String,
    permits: Semaphore,
}

impl HttpClient {
    /// Reads the API key from the environment variable named in `cfg`.
    pub fn from_env(cfg: &ModelConfig) -> Result<Self, GatewayError> {
        let key = std::env::var(&cfg.api_key_env)
            .map_err(|_| GatewayError::MissingApiKey(cfg.api_key_env.clone()))?;
        Self::with_api_key(cfg, key)
    }

    pub fn with_api_key(cfg: &ModelConfig, api_key: impl Into<String>) -> Result<Self, GatewayError> {
        cfg.validate()?;
        Ok(HttpClient {
            agent: ureq::AgentBuilder::new().timeout(cfg.request_timeout).build(),
            api_key: api_key.into(),
            permits: Semaphore::new(cfg.concurrency),
        })
    }

    fn send_once(&self, body: &serde_json::Value, cfg: &ModelConfig) -> Result<ModelReply, GatewayError> {
        let _permit = self.permits.acquire();
        let result = self
            .agent
            .post(&cfg.endpoint)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body);
        match result {
            Ok(resp) => {
                let text = resp
                    .into_string()
                    .map_err(|e| GatewayError::Transport(e.to_string()))?;
                parse_reply(&text)
            }
            Err(ureq::Error::Status(status, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                Err(match status {
                    401 | 403 => GatewayError::AuthFailure { status },
                    429 => GatewayError::RateLimited { attempts: 1 },
                    s if s >= 500 => GatewayError::Transport(format!("HTTP {s}: {body}")),
                    s => GatewayError::Http { status: s, body },
                })
            }
            Err(ureq::Error::Transport(t)) => Err(GatewayError::Transport(t.to_string())),
        }
    }
}

impl ChatClient for HttpClient {
    fn complete(
        &self,
        _tag: CallTag<'_>,
        messages: &[Message],
        cfg: &ModelConfig,
    ) -> Result<ModelReply, GatewayError> {
        let body = json!({
            "model": cfg.model_name,
            "messages": messages,
            "temperature": cfg.temperature,
            "n": cfg.samples_per_call,
        });
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.send_once(&body, cfg) {
                Err(e @ (GatewayError::RateLimited { .. } | GatewayError::Transport(_))) => {
                    if attempt > cfg.max_retries {
                        return Err(match e {
                            GatewayError::RateLimited { .. } => GatewayError::RateLimited { attempts: attempt },
                            other => other,
                        });
                    }
                    let wait = cfg.backoff_base * 2u32.saturating_pow(attempt - 1);
                    log::warn!("{e}; retrying in {wait:?}");
                    thread::sleep(wait);
                }
                other => return other,
            }
        }
    }
}
