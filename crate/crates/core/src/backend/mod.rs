//! Decoder backends: the per-step logits source the engine masks.

pub mod mock;
pub mod remote;
pub mod stub;

use std::sync::Arc;

use thiserror::Error;

use crate::token::{TokenId, Vocabulary};

pub use mock::{Directive, MockBackend, MockScript};
pub use remote::{RemoteBackend, RemoteConfig};
pub use stub::{StubOptions, StubServer};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("context of {len} tokens exceeds the maximum of {max}")]
    ContextOverflow { len: usize, max: usize },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("server error {status}: {body}")]
    ServerError { status: u16, body: String },
    #[error("backend does not support {0}")]
    Unsupported(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capabilities {
    pub vocab_id: String,
    pub vocab_size: usize,
    pub max_context: usize,
    /// False for servers that only expose a choice endpoint.
    pub supports_logits: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop: Option<String>,
}

pub trait DecoderBackend {
    fn capabilities(&self) -> Capabilities;

    fn vocab(&self) -> &Arc<Vocabulary>;

    /// Scores for every token id given the full context.
    fn next_logits(&mut self, context: &[TokenId]) -> Result<Vec<f32>, BackendError>;

    /// Notification that a new constrained span (gen or select) starts.
    fn begin_span(&mut self) {}

    /// Single free completion, used by the unconstrained baseline.
    fn generate_unconstrained(
        &mut self,
        _prompt: &str,
        _params: &GenParams,
    ) -> Result<String, BackendError> {
        Err(BackendError::Unsupported("unconstrained generation".into()))
    }

    /// Picks one of `options` given the context (degraded select mode).
    fn choose(&mut self, _context: &[TokenId], _options: &[String]) -> Result<usize, BackendError> {
        Err(BackendError::Unsupported("constrained choice".into()))
    }
}

impl<B: DecoderBackend + ?Sized> DecoderBackend for Box<B> {
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }

    fn vocab(&self) -> &Arc<Vocabulary> {
        (**self).vocab()
    }

    fn next_logits(&mut self, context: &[TokenId]) -> Result<Vec<f32>, BackendError> {
        (**self).next_logits(context)
    }

    fn begin_span(&mut self) {
        (**self).begin_span()
    }

    fn generate_unconstrained(&mut self, prompt: &str, params: &GenParams) -> Result<String, BackendError> {
        (**self).generate_unconstrained(prompt, params)
    }

    fn choose(&mut self, context: &[TokenId], options: &[String]) -> Result<usize, BackendError> {
        (**self).choose(context, options)
    }
}

/// Checks the shape invariant: one finite score per vocabulary entry.
pub fn check_logits(logits: &[f32], vocab_size: usize) -> Result<(), BackendError> {
    if logits.len() != vocab_size {
        return Err(BackendError::Transport(format!(
            "shape mismatch: expected {vocab_size} scores, got {}",
            logits.len()
        )));
    }
    if let Some(i) = logits.iter().position(|x| !x.is_finite()) {
        return Err(BackendError::Transport(format!("non-finite score at index {i}")));
    }
    Ok(())
}
