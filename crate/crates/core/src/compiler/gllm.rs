//! Clients for the general model that writes frameworks and programs.
//!
//! Fixture files are named by the SHA-256 of the exact prompt, so a replayed
//! exchange only matches when the rendered prompt is byte-identical.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GllmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no fixture for prompt hash {hash} in {dir}")]
    FixtureMissing { hash: String, dir: String },
    #[error("fixture {path} is invalid: {message}")]
    FixtureInvalid { path: String, message: String },
    #[error("scripted model has no reply left")]
    ScriptExhausted,
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub trait Gllm {
    fn complete(&mut self, prompt: &str) -> Result<String, GllmError>;
}

impl<G: Gllm + ?Sized> Gllm for &mut G {
    fn complete(&mut self, prompt: &str) -> Result<String, GllmError> {
        (**self).complete(prompt)
    }
}

impl<G: Gllm + ?Sized> Gllm for Box<G> {
    fn complete(&mut self, prompt: &str) -> Result<String, GllmError> {
        (**self).complete(prompt)
    }
}

/// Hex SHA-256 of the prompt bytes.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// One recorded exchange, stored as `<prompt_hash>.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixture {
    pub label: String,
    pub prompt: String,
    pub reply: String,
}

impl Fixture {
    pub fn path_in(dir: &Path, prompt: &str) -> PathBuf {
        dir.join(format!("{}.json", prompt_hash(prompt)))
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = Self::path_in(dir, &self.prompt);
        let mut text = serde_json::to_string_pretty(self).expect("fixture serializes");
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

/// Replays recorded exchanges; never touches the network.
#[derive(Debug, Clone)]
pub struct FixtureGllm {
    dir: PathBuf,
}

impl FixtureGllm {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl Gllm for FixtureGllm {
    fn complete(&mut self, prompt: &str) -> Result<String, GllmError> {
        let path = Fixture::path_in(&self.dir, prompt);
        let text = std::fs::read_to_string(&path).map_err(|_| GllmError::FixtureMissing {
            hash: prompt_hash(prompt),
            dir: self.dir.display().to_string(),
        })?;
        let invalid = |message: String| GllmError::FixtureInvalid {
            path: path.display().to_string(),
            message,
        };
        let fixture: Fixture = serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))?;
        if fixture.prompt != prompt {
            return Err(invalid("recorded prompt differs from the request".into()));
        }
        Ok(fixture.reply)
    }
}

/// Returns canned replies in order and keeps every prompt it was sent.
#[derive(Debug, Clone, Default)]
pub struct ScriptedGllm {
    replies: VecDeque<String>,
    pub prompts: Vec<String>,
}

impl ScriptedGllm {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self {
            replies: replies.into_iter().map(Into::into).collect(),
            prompts: Vec::new(),
        }
    }
}

impl Gllm for ScriptedGllm {
    fn complete(&mut self, prompt: &str) -> Result<String, GllmError> {
        self.prompts.push(prompt.to_string());
        self.replies.pop_front().ok_or(GllmError::ScriptExhausted)
    }
}

/// Forwards to `inner` and writes each exchange as a fixture file.
pub struct RecordingGllm<G> {
    inner: G,
    dir: PathBuf,
    pub label: String,
}

impl<G: Gllm> RecordingGllm<G> {
    pub fn new(inner: G, dir: impl Into<PathBuf>, label: impl Into<String>) -> Self {
        Self {
            inner,
            dir: dir.into(),
            label: label.into(),
        }
    }

    pub fn into_inner(self) -> G {
        self.inner
    }
}

impl<G: Gllm> Gllm for RecordingGllm<G> {
    fn complete(&mut self, prompt: &str) -> Result<String, GllmError> {
        let reply = self.inner.complete(prompt)?;
        let fixture = Fixture {
            label: self.label.clone(),
            prompt: prompt.to_string(),
            reply: reply.clone(),
        };
        fixture
            .write(&self.dir)
            .map_err(|e| GllmError::Transport(format!("writing fixture: {e}")))?;
        Ok(reply)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpGllmConfig {
    /// Base URL of a chat-completions style API.
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: f64,
    /// Name of the environment variable holding a bearer token.
    #[serde(default)]
    pub auth_env: Option<String>,
}

impl HttpGllmConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            timeout_secs: 120.0,
            auth_env: None,
        }
    }
}

/// Sends `{"model", "messages": [{"role": "user", "content"}], "temperature": 0}`
/// to `{endpoint}/chat/completions` and reads `choices[0].message.content`.
pub struct HttpGllm {
    config: HttpGllmConfig,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    content: String,
}

impl HttpGllm {
    pub fn new(config: HttpGllmConfig) -> Result<Self, GllmError> {
        if config.endpoint.is_empty() {
            return Err(GllmError::Config("endpoint is empty".into()));
        }
        if !(config.timeout_secs.is_finite() && config.timeout_secs > 0.0) {
            return Err(GllmError::Config("timeout must be > 0".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| GllmError::Config(e.to_string()))?;
        Ok(Self { config, client })
    }
}

impl Gllm for HttpGllm {
    fn complete(&mut self, prompt: &str) -> Result<String, GllmError> {
        let url = format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'));
        let body = ChatRequest {
            model: &self.config.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: 0.0,
        };
        let mut req = self.client.post(url).json(&body);
        if let Some(var) = &self.config.auth_env {
            let token = std::env::var(var).map_err(|_| GllmError::Config(format!("${var} is not set")))?;
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| GllmError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(GllmError::Transport(format!("status {status}: {body}")));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| GllmError::Transport(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| GllmError::Transport("reply has no choices".into()))
    }
}
