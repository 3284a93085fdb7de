//! Chat-completion clients, token accounting and cost.

mod http;
mod mock;

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::Message;

pub use http::HttpClient;
pub use mock::{MockClient, MockScript, WILDCARD};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("authentication failed (HTTP {status})")]
    AuthFailure { status: u16 },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("no scripted reply for {0}")]
    NoScriptedReply(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
}

impl GatewayError {
    /// Errors that end the whole run rather than one call.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            GatewayError::AuthFailure { .. }
                | GatewayError::MissingApiKey(_)
                | GatewayError::InvalidConfig(_)
                | GatewayError::NoScriptedReply(_)
        )
    }
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub model_name: String,
    pub temperature: f64,
    pub samples_per_call: u32,
    pub endpoint: String,
    pub api_key_env: String,
    #[serde(with = "duration_secs")]
    pub request_timeout: Duration,
    pub max_retries: u32,
    #[serde(with = "duration_secs")]
    pub backoff_base: Duration,
    pub concurrency: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            model_name: "gpt-4o-2024-08-06".into(),
            temperature: 1.0,
            samples_per_call: 1,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            request_timeout: Duration::from_secs(120),
            max_retries: 5,
            backoff_base: Duration::from_secs(1),
            concurrency: 2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::InvalidConfig(m.to_string()));
        if !(self.temperature >= 0.0) {
            return bad("temperature must be >= 0");
        }
        if self.samples_per_call < 1 {
            return bad("samples_per_call must be >= 1");
        }
        if self.concurrency < 1 {
            return bad("concurrency must be >= 1");
        }
        if self.model_name.trim().is_empty() {
            return bad("model_name is empty");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelReply {
    pub content: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub finish_reason: String,
}

/// Identifies a call for scripted clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallTag<'a> {
    pub bug_id: &'a str,
    /// 0-based index of this call among the bug's calls.
    pub call_index: u32,
}

pub trait ChatClient: Send + Sync {
    fn complete(
        &self,
        tag: CallTag<'_>,
        messages: &[Message],
        cfg: &ModelConfig,
    ) -> Result<ModelReply, GatewayError>;
}

/// Prices in currency units per 1000 tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub input_price_per_1k: Decimal,
    pub output_price_per_1k: Decimal,
}

impl CostModel {
    pub const GPT_4O: CostModel = CostModel {
        input_price_per_1k: Decimal::from_parts(25, 0, 0, false, 4),
        output_price_per_1k: Decimal::from_parts(1, 0, 0, false, 2),
    };
    pub const GPT_35_TURBO: CostModel = CostModel {
        input_price_per_1k: Decimal::from_parts(5, 0, 0, false, 4),
        output_price_per_1k: Decimal::from_parts(15, 0, 0, false, 4),
    };

    pub fn new(input_price_per_1k: Decimal, output_price_per_1k: Decimal) -> Result<Self, GatewayError> {
        if input_price_per_1k.is_sign_negative() || output_price_per_1k.is_sign_negative() {
            return Err(GatewayError::InvalidConfig("prices must be >= 0".into()));
        }
        Ok(CostModel {
            input_price_per_1k,
            output_price_per_1k,
        })
    }

    /// Known price list for a model name, matched by prefix.
    pub fn for_model(name: &str) -> Option<CostModel> {
        if name.starts_with("gpt-4o") {
            Some(CostModel::GPT_4O)
        } else if name.starts_with("gpt-3.5-turbo") {
            Some(CostModel::GPT_35_TURBO)
        } else {
            None
        }
    }
}

pub fn estimate_cost(input_tokens: u64, output_tokens: u64, cm: &CostModel) -> Decimal {
    let k = Decimal::from(1000);
    (Decimal::from(input_tokens) * cm.input_price_per_1k / k
        + Decimal::from(output_tokens) * cm.output_price_per_1k / k)
        .normalize()
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub struct Semaphore {
    free: Mutex<usize>,
    cond: Condvar,
}

pub struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Semaphore {
            free: Mutex::new(permits),
            cond: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("semaphore");
        while *free == 0 {
            free = self.cond.wait(free).expect("semaphore");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore") += 1;
        self.0.cond.notify_one();
    }
}
