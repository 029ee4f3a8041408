//! HTTP client for inference servers speaking the logits wire protocol.
//!
//! `POST {endpoint}/v1/logits` with `{"context": [ids], "model": name}`
//! answers `{"logits": [floats]}`; `POST {endpoint}/v1/generate` with
//! `{"prompt", "max_tokens", "temperature", "stop"}` answers `{"text"}`.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{check_logits, BackendError, Capabilities, DecoderBackend, GenParams};
use crate::token::{TokenId, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub timeout_secs: f64,
    #[serde(default)]
    pub retries: u32,
    /// Name of the environment variable holding a bearer token.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_max_context")]
    pub max_context: usize,
}

fn default_model() -> String {
    "default".into()
}

fn default_max_context() -> usize {
    32_768
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout_secs: 30.0,
            retries: 0,
            auth_env: None,
            model: default_model(),
            max_context: default_max_context(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(BackendError::Config("timeout must be > 0".into()));
        }
        if self.endpoint.is_empty() {
            return Err(BackendError::Config("endpoint is empty".into()));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct LogitsRequest<'a> {
    context: &'a [TokenId],
    model: &'a str,
}

#[derive(Deserialize)]
struct LogitsResponse {
    logits: Vec<f32>,
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    stop: Option<&'a str>,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    config: RemoteConfig,
    vocab: Arc<Vocabulary>,
    client: reqwest::blocking::Client,
}

const BODY_EXCERPT: usize = 200;

impl RemoteBackend {
    pub fn new(config: RemoteConfig, vocab: Arc<Vocabulary>) -> Result<Self, BackendError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            config,
            vocab,
            client,
        })
    }

    fn url(&self, route: &str) -> String {
        format!("{}{route}", self.config.endpoint.trim_end_matches('/'))
    }

    fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        route: &str,
        body: &Req,
    ) -> Result<Resp, BackendError> {
        let token = match &self.config.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let mut last_err = None;
        for _ in 0..=self.config.retries {
            let mut req = self.client.post(self.url(route)).json(body);
            if let Some(t) = &token {
                req = req.bearer_auth(t);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if !status.is_success() {
                        let text = resp.text().unwrap_or_default();
                        let body: String = text.chars().take(BODY_EXCERPT).collect();
                        return Err(BackendError::ServerError {
                            status: status.as_u16(),
                            body,
                        });
                    }
                    return resp
                        .json::<Resp>()
                        .map_err(|e| BackendError::Transport(format!("bad response body: {e}")));
                }
                Err(e) => last_err = Some(e.to_string()),
            }
        }
        Err(BackendError::Transport(last_err.unwrap_or_default()))
    }
}

impl DecoderBackend for RemoteBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            vocab_id: self.config.model.clone(),
            vocab_size: self.vocab.size(),
            max_context: self.config.max_context,
            supports_logits: true,
        }
    }

    fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    fn next_logits(&mut self, context: &[TokenId]) -> Result<Vec<f32>, BackendError> {
        if context.len() > self.config.max_context {
            return Err(BackendError::ContextOverflow {
                len: context.len(),
                max: self.config.max_context,
            });
        }
        let resp: LogitsResponse = self.post(
            "/v1/logits",
            &LogitsRequest {
                context,
                model: &self.config.model,
            },
        )?;
        check_logits(&resp.logits, self.vocab.size())?;
        Ok(resp.logits)
    }

    fn generate_unconstrained(&mut self, prompt: &str, params: &GenParams) -> Result<String, BackendError> {
        let resp: GenerateResponse = self.post(
            "/v1/generate",
            &GenerateRequest {
                prompt,
                max_tokens: params.max_tokens,
                temperature: params.temperature,
                stop: params.stop.as_deref(),
            },
        )?;
        Ok(resp.text)
    }
}
